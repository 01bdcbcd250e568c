use std::sync::OnceLock;

use cubefield::metrics::psnr_volume;
use cubefield::rendering::render_points;
use cubefield::synthesis::{render_slice, scale_plane, upsample_volume, PlaneSpec};
use cubefield::training::{train, LossTrace, TrainConfig, TrainState};
use cubefield::volume::{make_phantom, PhantomKind, Volume};

fn config(iters: u64) -> TrainConfig {
    TrainConfig {
        max_iters: iters,
        seed: 21,
        ..TrainConfig::desk()
    }
}

fn phantom() -> &'static Volume {
    static V: OnceLock<Volume> = OnceLock::new();
    V.get_or_init(|| make_phantom(PhantomKind::GaussianBlobs, [16; 3], 4).unwrap())
}

fn trained() -> &'static TrainState {
    static S: OnceLock<TrainState> = OnceLock::new();
    S.get_or_init(|| train(phantom(), &config(600), &mut ()).unwrap())
}

#[test]
fn loss_trends_down_over_two_thousand_steps() {
    let cfg = TrainConfig {
        log_every: 1,
        ..config(2000)
    };
    let mut trace = LossTrace::default();
    train(phantom(), &cfg, &mut trace).unwrap();
    let total: Vec<f64> = trace.lines.iter().map(|l| l.loss_coarse + l.loss_fine).collect();
    assert_eq!(total.len(), 2000);
    let lead = total[..500].iter().sum::<f64>() / 500.0;
    let trail = total[1500..].iter().sum::<f64>() / 500.0;
    assert!(trail < lead, "leading {lead}, trailing {trail}");
}

#[test]
fn constant_volume_renders_flat_slice() {
    let v = Volume::from_fn([12; 3], |_, _, _| 0.6).unwrap();
    let state = train(&v, &config(400), &mut ()).unwrap();
    let plane = PlaneSpec::axial([12; 3], 6.5);
    let s = render_slice(&state.pair, &config(0).test_settings(), &plane, 1).unwrap();
    let mean = s.data.iter().map(|&x| x as f64).sum::<f64>() / s.data.len() as f64;
    let var = s.data.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / s.data.len() as f64;
    assert!(var.sqrt() < 0.02, "std {}", var.sqrt());
    assert!((mean - 0.6).abs() < 0.05, "mean {mean}");
}

#[test]
fn slices_are_seeded_and_order_free() {
    let pair = &trained().pair;
    let settings = config(0).test_settings();
    let plane = scale_plane(&PlaneSpec::base([16; 3]), 1.5).unwrap();
    let a = render_slice(pair, &settings, &plane, 9).unwrap();
    assert_eq!(a, render_slice(pair, &settings, &plane, 9).unwrap());
    assert_eq!((a.rows, a.cols), (24, 24));

    let mut points = plane.points();
    points.reverse();
    let reversed = render_points(pair, &settings, &points, 9).unwrap();
    let forward: Vec<f32> = a.data.iter().rev().copied().collect();
    assert_eq!(reversed, forward);
}

#[test]
fn slice_matches_volume_at_shared_coordinates() {
    let pair = &trained().pair;
    let settings = config(0).test_settings();
    let vol = upsample_volume(pair, &settings, [16; 3], 5).unwrap();
    let z = 7;
    let plane = PlaneSpec::axial([16; 3], z as f64 + 0.5);
    let s = render_slice(pair, &settings, &plane, 5).unwrap();
    for r in 0..16 {
        for c in 0..16 {
            let diff = (s.data[r * 16 + c] - vol.get(c, r, z)).abs();
            assert!(diff <= 1e-6, "pixel ({r}, {c}) differs by {diff}");
        }
    }
}

#[test]
fn trained_field_beats_initialization_on_its_grid() {
    let cfg = config(0);
    let settings = cfg.test_settings();
    let fit = upsample_volume(&trained().pair, &settings, [16; 3], 2).unwrap();
    let init = TrainState::init([16; 3], &cfg).unwrap();
    let raw = upsample_volume(&init.pair, &settings, [16; 3], 2).unwrap();
    let (a, b) = (psnr_volume(&fit, phantom()).unwrap(), psnr_volume(&raw, phantom()).unwrap());
    assert!(a > b, "trained {a} dB, initial {b} dB");
}

#[test]
fn anisotropic_upsampling_grows_only_z() {
    let v = upsample_volume(&trained().pair, &config(0).test_settings(), [16, 16, 32], 3).unwrap();
    assert_eq!(v.dims(), [16, 16, 32]);
    assert!(v.data().iter().all(|x| (0.0..=1.0).contains(x)));
}
