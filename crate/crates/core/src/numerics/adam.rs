//! Adam with bias correction and decoupled weight decay, plus the
//! log-linear learning-rate schedule.

use ndarray::{ArrayViewMut, Dimension, Zip};
use serde::{Deserialize, Serialize};

use super::mlp::{FieldModel, Gradients};
use super::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay; each step shrinks weights by `weight_decay * lr`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub first: Gradients<T>,
    pub second: Gradients<T>,
    step: u64,
}

/// Scalars shared by every element of one update.
#[derive(Clone, Copy, Debug)]
struct StepScalars {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    correction1: f64,
    correction2: f64,
    decay: f64,
}

impl StepScalars {
    fn new(config: &AdamConfig, step: u64, lr: f64) -> Self {
        let t = step as i32;
        Self {
            lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            correction1: 1.0 - config.beta1.powi(t),
            correction2: 1.0 - config.beta2.powi(t),
            decay: config.weight_decay * lr,
        }
    }

    #[inline]
    fn apply<T: Real>(&self, p: &mut T, g: T, m: &mut T, v: &mut T, decay: bool) {
        let b1 = T::lit(self.beta1);
        let b2 = T::lit(self.beta2);
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = m.as_f64() / self.correction1;
        let v_hat = v.as_f64() / self.correction2;
        let mut next = p.as_f64() - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        if decay {
            next -= self.decay * p.as_f64();
        }
        *p = T::lit(next);
    }
}

fn update_array<T: Real, D: Dimension>(
    p: ArrayViewMut<'_, T, D>,
    g: ndarray::ArrayView<'_, T, D>,
    m: ArrayViewMut<'_, T, D>,
    v: ArrayViewMut<'_, T, D>,
    k: &StepScalars,
    decay: bool,
) {
    Zip::from(p)
        .and(g)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| k.apply(p, g, m, v, decay));
}

/// One Adam update on flat slices; `step` is the 1-based update index.
#[allow(clippy::too_many_arguments)]
pub fn adam_update_slice<T: Real>(
    params: &mut [T],
    grads: &[T],
    first: &mut [T],
    second: &mut [T],
    step: u64,
    lr: f64,
    config: &AdamConfig,
    decay: bool,
) {
    let k = StepScalars::new(config, step, lr);
    for i in 0..params.len() {
        k.apply(&mut params[i], grads[i], &mut first[i], &mut second[i], decay);
    }
}

impl<T: Real> AdamState<T> {
    pub fn new(model: &FieldModel<T>, config: AdamConfig) -> Self {
        Self {
            config,
            first: Gradients::zeros_like(model),
            second: Gradients::zeros_like(model),
            step: 0,
        }
    }

    /// Restores a saved optimizer state.
    pub fn from_parts(
        config: AdamConfig,
        first: Gradients<T>,
        second: Gradients<T>,
        step: u64,
    ) -> Self {
        Self {
            config,
            first,
            second,
            step,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Weight decay touches weight matrices only.
    pub fn step(&mut self, model: &mut FieldModel<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !model.grads_compatible(grads) || !model.grads_compatible(&self.first) {
            return Err(Error::Internal(
                "gradient or moment shapes do not match the model".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::Divergence {
                step: self.step + 1,
                lr,
                detail: "non-finite gradient".into(),
            });
        }
        self.step += 1;
        let k = StepScalars::new(&self.config, self.step, lr);
        let layers = model.layers_mut();
        for (((layer, g), m), v) in layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first.layers)
            .zip(&mut self.second.layers)
        {
            update_array(
                layer.weight.view_mut(),
                g.weight.view(),
                m.weight.view_mut(),
                v.weight.view_mut(),
                &k,
                true,
            );
            update_array(
                layer.bias.view_mut(),
                g.bias.view(),
                m.bias.view_mut(),
                v.bias.view_mut(),
                &k,
                false,
            );
        }
        Ok(())
    }
}

/// Log-linear interpolation from `lr_start` at step 0 to `lr_end` at
/// `max_steps`; steps past the end stay at `lr_end`.
pub fn lr_log_anneal(step: u64, max_steps: u64, lr_start: f64, lr_end: f64) -> f64 {
    if max_steps == 0 || step >= max_steps {
        return if max_steps == 0 && step == 0 { lr_start } else { lr_end };
    }
    let frac = step as f64 / max_steps as f64;
    lr_start * (lr_end / lr_start).powf(frac)
}
