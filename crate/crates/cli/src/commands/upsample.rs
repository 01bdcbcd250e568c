use std::path::PathBuf;

use clap::ValueEnum;
use log::info;
use serde::Serialize;

use cubefield::checkpoint::load_checkpoint;
use cubefield::metrics::MetricReport;
use cubefield::synthesis::{scaled_dims, upsample_volume};
use cubefield::volume::{read_volume, resample_trilinear, write_volume};
use cubefield::Error;

use super::ScaleMode;
use crate::manifest::{hash_file, hash_volume, write_json_atomic, RunManifest};
use crate::usage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Trilinear,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Trained model (not needed with `--baseline`).
    #[arg(long, required_unless_present = "baseline")]
    pub checkpoint: Option<PathBuf>,
    /// Output volume; the format follows the extension.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ScaleMode::ThreeD)]
    pub mode: ScaleMode,
    #[arg(long, default_value_t = 2.0)]
    pub scale: f64,
    /// HR volume to score the output against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Metrics JSON path; defaults to the output path with `.metrics.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Skip the field and interpolate `--input` instead.
    #[arg(long, value_enum, requires = "input")]
    pub baseline: Option<Baseline>,
    /// LR volume for `--baseline`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Seed for inference sampling; defaults to the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct Snapshot {
    method: &'static str,
    factors: [f64; 3],
    target: [usize; 3],
}

pub fn run(a: Args, argv: &[String]) -> anyhow::Result<()> {
    if !(a.scale.is_finite() && a.scale > 0.0) {
        return Err(usage(format!("--scale must be positive, got {}", a.scale)));
    }
    let factors = a.mode.factors(a.scale);
    let reference = a.reference.as_deref().map(read_volume).transpose()?;
    let mut inputs = Vec::new();
    let (method, mut output, seed) = match a.baseline {
        Some(Baseline::Trilinear) => {
            let path = a.input.as_deref().expect("clap enforces --input");
            let lr = read_volume(path)?;
            inputs.push(hash_volume(path)?);
            let target = scaled_dims(lr.dims(), factors)?;
            ("trilinear", resample_trilinear(&lr, target)?, a.seed.unwrap_or(0))
        }
        None => {
            let path = a.checkpoint.as_deref().expect("clap enforces --checkpoint");
            let ckpt = load_checkpoint(path)?;
            inputs.push(hash_file(path)?);
            let cfg = ckpt.config();
            let seed = a.seed.unwrap_or(cfg.seed);
            let dims = ckpt.state.pair.map.dims;
            let target = scaled_dims(dims, factors)?;
            info!("rendering {dims:?} -> {target:?}");
            let v = upsample_volume(&ckpt.state.pair, &cfg.test_settings(), target, seed)?;
            ("cubefield", v, seed)
        }
    };
    // Voxel size is only known when a reference supplies it.
    output.spacing = reference.as_ref().and_then(|r| r.spacing);
    let snapshot = Snapshot {
        method,
        factors,
        target: output.dims(),
    };
    let mut manifest = RunManifest::new("upsample", argv, seed, &snapshot)?;
    manifest.inputs = inputs;
    manifest.checkpoint = a.checkpoint.clone().filter(|_| a.baseline.is_none());
    write_volume(&output, &a.out)?;
    manifest.outputs.push(hash_volume(&a.out)?);
    if let Some(reference) = &reference {
        if reference.dims() != output.dims() {
            return Err(Error::ShapeMismatch {
                expected: format!("reference {:?}", reference.dims()),
                found: format!("output {:?}", output.dims()),
            }
            .into());
        }
        let report = MetricReport::evaluate(method, factors, &output, reference)?;
        info!("PSNR {:.3} dB, SSIM {:.4}", report.psnr_db, report.ssim);
        let path = a.report.clone().unwrap_or_else(|| a.out.with_extension("metrics.json"));
        write_json_atomic(&path, &report)?;
        manifest.inputs.push(hash_volume(a.reference.as_deref().expect("reference path"))?);
        manifest.outputs.push(hash_file(&path)?);
    }
    manifest.finish("ok");
    let mut mpath = a.out.as_os_str().to_owned();
    mpath.push(".manifest.json");
    manifest.write(&PathBuf::from(mpath))
}

