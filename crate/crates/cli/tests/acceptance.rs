//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Criteria 4 and 5 train ten models; expect several minutes on one core.
//! Set `CUBEFIELD_ACCEPT_SKIP_TRAINING=1` to report them as skipped.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::Matrix3;
use ndarray::ArrayView2;
use rand::Rng;

use common::{ok, run, s};
use cubefield::gradcheck::check_micro_pipeline;
use cubefield::metrics::{psnr_from_mse, psnr_volume, ssim2d, ssim_volumetric, MetricReport};
use cubefield::rendering::{isotropic_quadrature, RendererMode, SamplerMode};
use cubefield::sampling::sample_radii_its;
use cubefield::seeds;
use cubefield::synthesis::{rodrigues, scale_plane, upsample_volume, PlaneSpec};
use cubefield::training::{adaptive_loss, nerf_loss, train, LossMode, TrainConfig};
use cubefield::volume::{
    downsample_nearest, load_raw, make_phantom, read_nifti, resample_trilinear, save_raw, PhantomKind,
    Volume,
};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn within(elapsed: Duration, budget_s: f64, detail: String) -> Outcome {
    let t = elapsed.as_secs_f64();
    check(
        t < budget_s,
        format!("{detail}; {t:.2} s"),
        format!("{detail}; {t:.2} s exceeds the {budget_s} s budget"),
    )
}

fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    let r = check_micro_pipeline(3).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} parameters, max relative error {:.2e}",
        r.parameters, r.max_relative_error
    );
    if r.max_relative_error >= 1e-4 {
        return Err(detail);
    }
    within(t.elapsed(), 30.0, detail)
}

/// Nested trapezoid rule for the radial integral with constant density and
/// intensity.
fn radial_integral(sigma: f64, c: f64, rmax: f64, steps: usize) -> f64 {
    let h = rmax / steps as f64;
    let (mut inner, mut prev_inner, mut prev_outer, mut total) = (0.0, 0.0, 0.0, 0.0);
    for k in 1..=steps {
        let r = k as f64 * h;
        let inner_integrand = r * r * sigma;
        inner += 0.5 * h * (prev_inner + inner_integrand);
        prev_inner = inner_integrand;
        let outer = 4.0 * PI * r * r * sigma * c * (-4.0 * PI * inner).exp();
        total += 0.5 * h * (prev_outer + outer);
        prev_outer = outer;
    }
    total
}

fn quadrature_oracle() -> Outcome {
    let t = Instant::now();
    let (sigma, c) = (0.7, 0.6);
    let rmax = 3f64.sqrt() / 2.0;
    let exact = radial_integral(sigma, c, rmax, 1_000_000);
    let mut errors = Vec::new();
    for n in [64usize, 256, 4096] {
        let radii: Vec<f64> = (0..n).map(|i| i as f64 * rmax / n as f64).collect();
        let q = isotropic_quadrature(&radii, &vec![sigma; n], &vec![c; n], rmax).map_err(|e| e.to_string())?;
        errors.push(((q.value - exact) / exact).abs());
    }
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    let detail = format!("relative errors at N=64/256/4096: [{}]", shown.join(", "));
    if !(errors[2] < 1e-2 && errors[0] > errors[1] && errors[1] > errors[2]) {
        return Err(detail);
    }
    within(t.elapsed(), 5.0, detail)
}

fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn its_correctness() -> Outcome {
    let t = Instant::now();
    let n = 100_000;
    let rmax = 3f64.sqrt() / 2.0;
    let edges: Vec<f64> = (0..=8).map(|i| i as f64 * rmax / 8.0).collect();
    let mut rng = seeds::rng(11);
    let uniform = sample_radii_its(&[0.125; 8], &edges, n, &mut rng).map_err(|e| e.to_string())?;
    let d_uniform = ks(uniform, |x| (x / rmax).clamp(0.0, 1.0));
    let (p, split) = (0.3, 0.4);
    let two = sample_radii_its(&[p, 1.0 - p], &[0.0, split, 1.0], n, &mut rng).map_err(|e| e.to_string())?;
    let d_two = ks(two, |x| {
        if x < split {
            p * x / split
        } else {
            p + (1.0 - p) * (x - split) / (1.0 - split)
        }
    });
    let detail = format!("KS uniform {d_uniform:.4}, two-bin {d_two:.4} at 1e5 draws");
    if !(d_uniform < 0.01 && d_two < 0.01) {
        return Err(detail);
    }
    within(t.elapsed(), 5.0, detail)
}

struct Trial {
    seed: u64,
    cube: f64,
    ray: f64,
    trilinear: f64,
}

fn trained_psnr(hr: &Volume, lr: &Volume, seed: u64, sampler: SamplerMode) -> Result<f64, String> {
    let mut cfg = TrainConfig::desk();
    cfg.seed = seed;
    if sampler == SamplerMode::Ray {
        cfg.render.sampler = SamplerMode::Ray;
        cfg.render.renderer = RendererMode::Ray;
        cfg.loss = LossMode::Nerf;
    }
    let state = train(lr, &cfg, &mut ()).map_err(|e| e.to_string())?;
    let sr = upsample_volume(&state.pair, &cfg.test_settings(), hr.dims(), seed).map_err(|e| e.to_string())?;
    psnr_volume(&sr, hr).map_err(|e| e.to_string())
}

/// Desk-profile runs on a 32^3 phantom degraded x2, five seeds.
fn phantom_trials() -> Result<(Vec<Trial>, Duration), String> {
    let t = Instant::now();
    let mut out = Vec::new();
    for seed in 1..=5u64 {
        let hr = make_phantom(PhantomKind::SheppLoganLike, [32; 3], seed).map_err(|e| e.to_string())?;
        let lr = downsample_nearest(&hr, [2.0; 3]).map_err(|e| e.to_string())?;
        let tri = resample_trilinear(&lr, hr.dims()).map_err(|e| e.to_string())?;
        let trial = Trial {
            seed,
            cube: trained_psnr(&hr, &lr, seed, SamplerMode::Cube)?,
            ray: trained_psnr(&hr, &lr, seed, SamplerMode::Ray)?,
            trilinear: psnr_volume(&tri, &hr).map_err(|e| e.to_string())?,
        };
        println!(
            "      seed {}: cube {:.2} dB, ray {:.2} dB, trilinear {:.2} dB",
            trial.seed, trial.cube, trial.ray, trial.trilinear
        );
        out.push(trial);
    }
    Ok((out, t.elapsed()))
}

fn beats(trials: &[Trial], other: impl Fn(&Trial) -> f64, name: &str, elapsed: Duration) -> Outcome {
    let wins = trials.iter().filter(|t| t.cube > other(t)).count();
    let margins: Vec<String> = trials.iter().map(|t| format!("{:+.2}", t.cube - other(t))).collect();
    let detail = format!("cube beats {name} in {wins}/5 seeds, margins dB [{}]", margins.join(", "));
    if wins < 4 {
        return Err(detail);
    }
    within(elapsed, 3600.0, detail)
}

fn adaptive_loss_sanity() -> Outcome {
    let gt = [0.0, 0.25, 0.5, 1.0, 0.123];
    let coarse = [0.9, 0.1, 0.7, 0.0, 0.5];
    let zero = adaptive_loss(&gt, &coarse, &gt).map_err(|e| e.to_string())?.loss;
    if zero != 0.0 {
        return Err(format!("loss with exact fine prediction is {zero:e}, not 0"));
    }
    let mut rng = seeds::rng(21);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100_000 {
        let (g, c, f): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let a = adaptive_loss(&[g], &[c], &[f]).map_err(|e| e.to_string())?.loss;
        let n = nerf_loss(&[g], &[c], &[f]).map_err(|e| e.to_string())?.loss;
        worst = worst.max(a - n);
    }
    check(
        worst <= 0.0,
        format!("loss exactly 0 at fine = gt; max(adaptive - nerf) = {worst:.3e} over 1e5 points"),
        format!("adaptive exceeds nerf by {worst:e}"),
    )
}

fn geometry() -> Outcome {
    let mut rng = seeds::rng(31);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let axis = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        if axis.iter().map(|a: &f64| a * a).sum::<f64>() < 1e-6 {
            continue;
        }
        let (a, b) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let r = rodrigues(axis, a).map_err(|e| e.to_string())?;
        let rb = rodrigues(axis, b).map_err(|e| e.to_string())?;
        let rab = rodrigues(axis, a + b).map_err(|e| e.to_string())?;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = (r.determinant() - 1.0).abs();
        let compose = (r * rb - rab).abs().max();
        worst = worst.max(ortho).max(det).max(compose);
    }
    if worst > 1e-9 {
        return Err(format!("Rodrigues property error {worst:.2e} exceeds 1e-9"));
    }
    let base = PlaneSpec::base([32, 32, 32]);
    let extent = base.extent();
    for delta in [1.0, 2.0, 2.5, 4.0, 8.0] {
        let p = scale_plane(&base, delta).map_err(|e| e.to_string())?;
        let e = p.extent();
        if (e.0 - extent.0).abs() > 1e-9 || (e.1 - extent.1).abs() > 1e-9 {
            return Err(format!("scale {delta} changes extent {extent:?} to {e:?}"));
        }
    }
    Ok(format!(
        "1e4 rotations, max property error {worst:.2e}; extent fixed for scales 1, 2, 2.5, 4, 8"
    ))
}

fn metrics() -> Outcome {
    let mut rng = seeds::rng(41);
    let img: Vec<f64> = (0..32 * 32).map(|_| rng.random()).collect();
    let view = ArrayView2::from_shape((32, 32), &img).map_err(|e| e.to_string())?;
    let self_ssim = ssim2d(view, view).map_err(|e| e.to_string())?;
    if (self_ssim - 1.0).abs() > 1e-12 {
        return Err(format!("ssim(x, x) = {self_ssim}"));
    }
    let p = psnr_from_mse(0.01);
    if p != 20.0 {
        return Err(format!("PSNR at MSE 0.01 is {p}, not 20"));
    }
    let a = make_phantom(PhantomKind::GaussianBlobs, [16, 20, 24], 1).map_err(|e| e.to_string())?;
    let b = make_phantom(PhantomKind::GaussianBlobs, [16, 20, 24], 2).map_err(|e| e.to_string())?;
    let planes = ssim_volumetric(&a, &b).map_err(|e| e.to_string())?;
    // Per-plane means recomputed slice by slice.
    let family = |axis: usize| -> Result<f64, String> {
        let n = a.dims()[axis];
        let mut total = 0.0;
        for i in 0..n {
            let (rows, cols, x) = a.slice(axis, i);
            let (_, _, y) = b.slice(axis, i);
            let xv = ArrayView2::from_shape((rows, cols), &x).map_err(|e| e.to_string())?;
            let yv = ArrayView2::from_shape((rows, cols), &y).map_err(|e| e.to_string())?;
            total += ssim2d(xv, yv).map_err(|e| e.to_string())?;
        }
        Ok(total / n as f64)
    };
    let expect = [family(2)?, family(1)?, family(0)?];
    let got = [planes.axial, planes.coronal, planes.sagittal];
    let report = MetricReport::evaluate("check", [1.0; 3], &a, &b).map_err(|e| e.to_string())?;
    let mean = (expect[0] + expect[1] + expect[2]) / 3.0;
    let err = (0..3)
        .map(|i| (expect[i] - got[i]).abs())
        .fold((report.ssim - mean).abs(), f64::max);
    check(
        err < 1e-12,
        format!("ssim(x, x) = 1, PSNR(MSE 0.01) = 20 dB, volumetric SSIM = plane mean (error {err:.1e})"),
        format!("volumetric SSIM differs from the per-plane mean by {err:e}"),
    )
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let ph = d.join("ph");
    ok(&["phantom", "--kind", "shepp-logan-like", "--dims", "16", "--seed", "3", "--out-dir", s(&ph)]);
    let mut outputs = Vec::new();
    for k in 0..2 {
        let run_dir = d.join(format!("run{k}"));
        ok(&[
            "--threads", "1", "train", "--input", s(&ph.join("lr.nii")), "--profile", "desk",
            "--iters", "150", "--seed", "7", "--out", s(&run_dir),
        ]);
        let sr = d.join(format!("sr{k}.nii"));
        ok(&[
            "--threads", "1", "upsample", "--checkpoint", s(&run_dir.join("model.ckpt")), "--out",
            s(&sr), "--scale", "2", "--reference", s(&ph.join("hr.nii")),
        ]);
        let ckpt = fs::read(run_dir.join("model.ckpt")).map_err(|e| e.to_string())?;
        let metrics = fs::read(d.join(format!("sr{k}.metrics.json"))).map_err(|e| e.to_string())?;
        outputs.push((ckpt, metrics));
    }
    check(
        outputs[0] == outputs[1],
        format!(
            "two --threads 1 runs: identical checkpoints ({} bytes) and metric JSON",
            outputs[0].0.len()
        ),
        "outputs of two identical runs differ".into(),
    )
}

fn format_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = seeds::rng(51);
    let data: Vec<f32> = (0..6 * 5 * 4).map(|_| rng.random::<f32>()).collect();
    let mut v = Volume::new([6, 5, 4], data).map_err(|e| e.to_string())?;
    v.spacing = Some([0.7, 0.8, 2.5]);
    v.intensity_min = -1024.0;
    v.intensity_max = 3071.0;
    let path = dir.path().join("v.f32");
    save_raw(&v, &path).map_err(|e| e.to_string())?;
    let back = load_raw(&path).map_err(|e| e.to_string())?;
    let bits = |x: &Volume| x.data().iter().map(|f| f.to_bits()).collect::<Vec<_>>();
    if bits(&back) != bits(&v) || back != v {
        return Err("raw round trip is not bit-exact".into());
    }

    // Hand-built int16 NIfTI-1: 3 x 2 x 1 voxels.
    let mut nii = vec![0u8; 352];
    nii[0..4].copy_from_slice(&348i32.to_le_bytes());
    for (i, d) in [3i16, 3, 2, 1].iter().enumerate() {
        nii[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    nii[70..72].copy_from_slice(&4i16.to_le_bytes());
    nii[72..74].copy_from_slice(&16i16.to_le_bytes());
    nii[108..112].copy_from_slice(&352f32.to_le_bytes());
    nii[344..348].copy_from_slice(b"n+1\0");
    for x in [-100i16, 0, 100, 200, 300, 400] {
        nii.extend_from_slice(&x.to_le_bytes());
    }
    let parsed = read_nifti(&nii).map_err(|e| e.to_string())?;
    if parsed.dims() != [3, 2, 1]
        || parsed.data() != [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
        || (parsed.intensity_min, parsed.intensity_max) != (-100.0, 400.0)
    {
        return Err(format!("int16 NIfTI parsed as {:?} {:?}", parsed.dims(), parsed.data()));
    }

    let cut = dir.path().join("cut.nii");
    fs::write(&cut, &nii[..200]).map_err(|e| e.to_string())?;
    let out = run(&["train", "--input", s(&cut), "--out", s(&dir.path().join("r"))]);
    check(
        out.status.code() == Some(3),
        "raw save/load bit-exact; int16 NIfTI dims and values correct; truncated header exits 3".into(),
        format!("truncated header exited with {:?}", out.status.code()),
    )
}

fn main() -> ExitCode {
    let skip_training = std::env::var_os("CUBEFIELD_ACCEPT_SKIP_TRAINING").is_some();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {detail}");
            }
        }
    };
    report(1, "gradient fidelity", gradient_fidelity());
    report(2, "quadrature oracle", quadrature_oracle());
    report(3, "inverse transform sampling", its_correctness());
    if skip_training {
        println!("SKIP  4 zero-shot SR beats trilinear: training disabled by environment");
        println!("SKIP  5 cube sampler beats ray baseline: training disabled by environment");
    } else {
        match phantom_trials() {
            Ok((trials, elapsed)) => {
                report(4, "zero-shot SR beats trilinear", beats(&trials, |t| t.trilinear, "trilinear", elapsed));
                report(5, "cube sampler beats ray baseline", beats(&trials, |t| t.ray, "ray baseline", elapsed));
            }
            Err(e) => {
                report(4, "zero-shot SR beats trilinear", Err(e.clone()));
                report(5, "cube sampler beats ray baseline", Err(e));
            }
        }
    }
    report(6, "adaptive loss sanity", adaptive_loss_sanity());
    report(7, "geometry", geometry());
    report(8, "metrics", metrics());
    report(9, "reproducibility", reproducibility());
    report(10, "format round trip", format_round_trip());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
