//! End-to-end gradient verification by central finite differences.
//!
//! The full pipeline (encode, MLP, isotropic quadrature, adaptive loss) is
//! evaluated in f64 on a tiny configuration. Sample positions and the
//! adaptive coefficient are held at their unperturbed values, matching what
//! the analytic backward pass differentiates.

use rand::Rng;

use crate::error::Result;
use crate::numerics::{EncoderConfig, FieldModel, MlpConfig};
use crate::rendering::{backward_batch, render_batch, render_fixed, FieldPair, RenderSettings, Target};
use crate::sampling::SampleSet;
use crate::seeds;
use crate::training::adaptive_loss;
use crate::volume::NormalizationMap;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub parameters: usize,
    pub max_relative_error: f64,
    pub max_abs_gradient: f64,
}

/// Relative error with a floor on the denominator so that parameters with
/// vanishing gradient compare absolutely.
fn relative(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn frozen_loss(
    pair: &FieldPair<f64>,
    settings: &RenderSettings,
    coarse: &[SampleSet],
    fine: &[SampleSet],
    gt: &[f64],
    lambda: &[f64],
) -> Result<f64> {
    let t = render_fixed(pair, settings, coarse.to_vec(), fine.to_vec(), false)?;
    Ok((0..gt.len())
        .map(|b| {
            lambda[b] * (gt[b] - t.coarse.values[b]).powi(2) + (gt[b] - t.fine.values[b]).powi(2)
        })
        .sum())
}

/// Checks every parameter of both fields of a width-8 network with
/// `N_c = N_f = 4` on a batch of two targets.
pub fn check_micro_pipeline(seed: u64) -> Result<GradCheckReport> {
    let mut rng = seeds::rng(seed);
    let mlp = MlpConfig {
        width: 8,
        depth: 3,
        skips: vec![2],
        ..MlpConfig::default()
    };
    let enc = EncoderConfig::new(3);
    let mut pair = FieldPair {
        coarse: FieldModel::<f64>::new(enc, mlp.clone(), &mut rng)?,
        fine: FieldModel::<f64>::new(enc, mlp, &mut rng)?,
        map: NormalizationMap::new([6, 6, 6], 2.0),
    };
    // Move the output biases away from the flat initial head.
    for model in [&mut pair.coarse, &mut pair.fine] {
        let head = model.layers_mut().last_mut().expect("head layer");
        head.weight.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        head.bias[0] = 0.2;
        head.bias[1] = 1.0;
    }
    let settings = RenderSettings {
        n_coarse: 4,
        n_fine: 4,
        ..RenderSettings::default()
    };
    let targets = [
        Target {
            center: [2.5, 3.5, 1.5],
            axis: 0,
            seed: seeds::derive(seed, &[1]),
        },
        Target {
            center: [4.5, 2.5, 3.5],
            axis: 0,
            seed: seeds::derive(seed, &[2]),
        },
    ];
    let gt = [0.3, 0.8];
    let trace = render_batch(&pair, &settings, &targets, true)?;
    let out = adaptive_loss(&gt, &trace.coarse.values, &trace.fine.values)?;
    let lambda: Vec<f64> = (0..2).map(|b| (gt[b] - trace.fine.values[b]).abs().sqrt()).collect();
    let (g_coarse, g_fine) = backward_batch(&pair, &settings, &trace, &out.d_coarse, &out.d_fine)?;
    let coarse_sets = trace.coarse.sets.clone();
    let fine_sets = trace.fine.sets.clone();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut largest: f64 = 0.0;
    let mut count = 0;
    for (which, grads) in [(0, &g_coarse), (1, &g_fine)] {
        for (li, g_layer) in grads.layers.iter().enumerate() {
            let n_w = g_layer.weight.len();
            let cols = g_layer.weight.ncols();
            for k in 0..n_w + g_layer.bias.len() {
                let analytic = if k < n_w {
                    g_layer.weight[[k / cols, k % cols]]
                } else {
                    g_layer.bias[k - n_w]
                };
                let eval = |delta: f64| -> Result<f64> {
                    let mut p = pair.clone();
                    let model = if which == 0 { &mut p.coarse } else { &mut p.fine };
                    let layer = &mut model.layers_mut()[li];
                    if k < n_w {
                        layer.weight[[k / cols, k % cols]] += delta;
                    } else {
                        layer.bias[k - n_w] += delta;
                    }
                    frozen_loss(&p, &settings, &coarse_sets, &fine_sets, &gt, &lambda)
                };
                let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
                worst = worst.max(relative(analytic, numeric, 1e-6));
                largest = largest.max(analytic.abs());
                count += 1;
            }
        }
    }
    Ok(GradCheckReport {
        parameters: count,
        max_relative_error: worst,
        max_abs_gradient: largest,
    })
}
