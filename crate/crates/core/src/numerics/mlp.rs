//! The coordinate network: a ReLU MLP with input skip connections and a
//! two-channel head producing `(intensity, density)`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoding::EncoderConfig;
use super::Real;
use crate::error::{Error, Result};

/// Number of spatial input dimensions.
pub const SPATIAL_DIM: usize = 3;

/// Half-width of the uniform init range for the output head.
const HEAD_INIT_BOUND: f64 = 1e-4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntensityActivation {
    #[default]
    Sigmoid,
    Identity,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityActivation {
    #[default]
    Softplus,
    Relu,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputActivations {
    pub intensity: IntensityActivation,
    pub density: DensityActivation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub width: usize,
    /// Number of hidden layers.
    pub depth: usize,
    /// Hidden layers whose input is `[previous hidden || encoded input]`.
    pub skips: Vec<usize>,
    #[serde(default)]
    pub activations: OutputActivations,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            width: 256,
            depth: 9,
            skips: vec![4, 8],
            activations: OutputActivations::default(),
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.depth == 0 {
            return Err(Error::Config("MLP width and depth must be positive".into()));
        }
        if let Some(&k) = self.skips.iter().find(|&&k| k == 0 || k >= self.depth) {
            return Err(Error::Config(format!(
                "skip index {k} must lie in 1..{}",
                self.depth
            )));
        }
        Ok(())
    }

    fn is_skip(&self, layer: usize) -> bool {
        self.skips.contains(&layer)
    }
}

/// One fully connected layer; `weight` is `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, bound: f64, rng: &mut R) -> Self {
        let weight = Array2::from_shape_simple_fn((outputs, inputs), || {
            T::lit(rng.random_range(-bound..=bound))
        });
        Self {
            weight,
            bias: Array1::zeros(outputs),
        }
    }

    fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            weight: self.weight.mapv(|v| U::lit(v.as_f64())),
            bias: self.bias.mapv(|v| U::lit(v.as_f64())),
        }
    }

    fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Per-row network outputs after the output activations.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldOutput<T> {
    pub intensity: Array1<T>,
    pub density: Array1<T>,
}

/// Activations kept from a forward pass, enough for an exact backward pass.
#[derive(Debug)]
pub struct ForwardCache<T> {
    revision: u64,
    /// Input matrix of every layer, the head last.
    inputs: Vec<Array2<T>>,
    head_pre: Array2<T>,
}

impl<T> ForwardCache<T> {
    pub fn rows(&self) -> usize {
        self.head_pre.nrows()
    }
}

/// Parameter-shaped container used for gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(model: &FieldModel<T>) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    pub fn max_abs(&self) -> T {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    fn shapes_match(&self, model: &FieldModel<T>) -> bool {
        self.layers.len() == model.layers.len()
            && self
                .layers
                .iter()
                .zip(&model.layers)
                .all(|(g, l)| g.weight.dim() == l.weight.dim() && g.bias.dim() == l.bias.dim())
    }
}

#[derive(Clone, Debug)]
pub struct FieldModel<T> {
    encoder: EncoderConfig,
    config: MlpConfig,
    layers: Vec<Dense<T>>,
    revision: u64,
}

/// Equality ignores the revision counter, which only guards caches.
impl<T: PartialEq> PartialEq for FieldModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.encoder == other.encoder && self.config == other.config && self.layers == other.layers
    }
}

impl<T: Real> FieldModel<T> {
    /// He-uniform hidden layers, near-zero head, zero biases.
    pub fn new<R: Rng + ?Sized>(
        encoder: EncoderConfig,
        config: MlpConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let input = encoder.encoded_dim(SPATIAL_DIM);
        let mut layers = Vec::with_capacity(config.depth + 1);
        for k in 0..config.depth {
            let fan_in = layer_inputs(&config, input, k);
            let bound = (6.0 / fan_in as f64).sqrt();
            layers.push(Dense::uniform(fan_in, config.width, bound, rng));
        }
        layers.push(Dense::uniform(config.width, 2, HEAD_INIT_BOUND, rng));
        Ok(Self {
            encoder,
            config,
            layers,
            revision: 0,
        })
    }

    pub fn zeros(encoder: EncoderConfig, config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let input = encoder.encoded_dim(SPATIAL_DIM);
        let mut layers: Vec<Dense<T>> = (0..config.depth)
            .map(|k| Dense::zeros(layer_inputs(&config, input, k), config.width))
            .collect();
        layers.push(Dense::zeros(config.width, 2));
        Ok(Self {
            encoder,
            config,
            layers,
            revision: 0,
        })
    }

    /// Rebuilds a model from explicit layers, checking them against the config.
    pub fn from_layers(
        encoder: EncoderConfig,
        config: MlpConfig,
        layers: Vec<Dense<T>>,
    ) -> Result<Self> {
        let template = Self::zeros(encoder, config)?;
        let ok = layers.len() == template.layers.len()
            && layers
                .iter()
                .zip(&template.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.dim() == b.bias.dim());
        if !ok {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", template.layer_shapes()),
                found: format!(
                    "{:?}",
                    layers
                        .iter()
                        .map(|l| (l.outputs(), l.inputs()))
                        .collect::<Vec<_>>()
                ),
            });
        }
        Ok(Self {
            layers,
            ..template
        })
    }

    pub fn encoder(&self) -> &EncoderConfig {
        &self.encoder
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    /// Mutable parameter access. Invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        self.revision += 1;
        &mut self.layers
    }

    /// Incremented on every parameter mutation.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.encoded_dim(SPATIAL_DIM)
    }

    /// `(outputs, inputs)` of each layer, head last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.outputs(), l.inputs()))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Dense::len).sum()
    }

    pub fn cast<U: Real>(&self) -> FieldModel<U> {
        FieldModel {
            encoder: self.encoder,
            config: self.config.clone(),
            layers: self.layers.iter().map(Dense::cast).collect(),
            revision: self.revision,
        }
    }

    fn check_input(&self, encoded: &ArrayView2<T>) -> Result<()> {
        if encoded.ncols() != self.input_dim() {
            return Err(Error::Config(format!(
                "encoded width {} does not match model input width {}",
                encoded.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass over a batch of encoded rows, keeping the activations.
    pub fn forward(&self, encoded: ArrayView2<T>) -> Result<(FieldOutput<T>, ForwardCache<T>)> {
        self.check_input(&encoded)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let hidden = self.run_hidden(encoded, Some(&mut inputs));
        let head_pre = affine(&hidden, &self.layers[self.config.depth]);
        inputs.push(hidden);
        let output = self.activate(&head_pre);
        Ok((
            output,
            ForwardCache {
                revision: self.revision,
                inputs,
                head_pre,
            },
        ))
    }

    /// Forward pass without retaining activations.
    pub fn predict(&self, encoded: ArrayView2<T>) -> Result<FieldOutput<T>> {
        self.check_input(&encoded)?;
        let hidden = self.run_hidden(encoded, None);
        let head_pre = affine(&hidden, &self.layers[self.config.depth]);
        Ok(self.activate(&head_pre))
    }

    fn run_hidden(
        &self,
        encoded: ArrayView2<T>,
        mut keep: Option<&mut Vec<Array2<T>>>,
    ) -> Array2<T> {
        let mut h = encoded.to_owned();
        for k in 0..self.config.depth {
            let input = if k > 0 && self.config.is_skip(k) {
                concatenate(Axis(1), &[h.view(), encoded]).expect("row counts agree")
            } else {
                h
            };
            let mut z = affine(&input, &self.layers[k]);
            z.mapv_inplace(|v| v.max(T::zero()));
            if let Some(cache) = keep.as_deref_mut() {
                cache.push(input);
            }
            h = z;
        }
        h
    }

    fn activate(&self, head_pre: &Array2<T>) -> FieldOutput<T> {
        let acts = self.config.activations;
        let intensity = head_pre.column(0).mapv(|z| match acts.intensity {
            IntensityActivation::Sigmoid => sigmoid(z),
            IntensityActivation::Identity => z,
        });
        let density = head_pre.column(1).mapv(|z| match acts.density {
            DensityActivation::Softplus => softplus(z),
            DensityActivation::Relu => z.max(T::zero()),
        });
        FieldOutput { intensity, density }
    }

    /// Parameter gradients given the loss gradient at the activated outputs.
    /// Rows are summed.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        d_intensity: ArrayView1<T>,
        d_density: ArrayView1<T>,
    ) -> Result<Gradients<T>> {
        if cache.revision != self.revision || cache.inputs.len() != self.layers.len() {
            return Err(Error::Internal(format!(
                "stale forward cache (cache revision {}, model revision {})",
                cache.revision, self.revision
            )));
        }
        let rows = cache.rows();
        if d_intensity.len() != rows || d_density.len() != rows {
            return Err(Error::Internal(format!(
                "upstream gradient length {}/{} does not match cache rows {rows}",
                d_intensity.len(),
                d_density.len()
            )));
        }
        let acts = self.config.activations;
        let mut dz = Array2::<T>::zeros((rows, 2));
        Zip::from(dz.rows_mut())
            .and(cache.head_pre.rows())
            .and(&d_intensity)
            .and(&d_density)
            .for_each(|mut d, z, &gi, &gs| {
                d[0] = gi
                    * match acts.intensity {
                        IntensityActivation::Sigmoid => {
                            let c = sigmoid(z[0]);
                            c * (T::one() - c)
                        }
                        IntensityActivation::Identity => T::one(),
                    };
                d[1] = gs
                    * match acts.density {
                        DensityActivation::Softplus => sigmoid(z[1]),
                        DensityActivation::Relu => {
                            if z[1] > T::zero() {
                                T::one()
                            } else {
                                T::zero()
                            }
                        }
                    };
            });

        let depth = self.config.depth;
        let width = self.config.width;
        let mut grads: Vec<Dense<T>> = Vec::with_capacity(self.layers.len());
        grads.push(dense_grad(&dz, &cache.inputs[depth]));
        let mut dh = dz.dot(&self.layers[depth].weight);
        for k in (0..depth).rev() {
            // ReLU mask from this layer's output, which leads the next input.
            let out = cache.inputs[k + 1].slice(s![.., ..width]);
            Zip::from(&mut dh).and(&out).for_each(|d, &h| {
                if h <= T::zero() {
                    *d = T::zero();
                }
            });
            grads.push(dense_grad(&dh, &cache.inputs[k]));
            if k > 0 {
                let d_input = dh.dot(&self.layers[k].weight);
                dh = d_input.slice(s![.., ..width]).to_owned();
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    pub(crate) fn grads_compatible(&self, grads: &Gradients<T>) -> bool {
        grads.shapes_match(self)
    }
}

fn layer_inputs(config: &MlpConfig, input: usize, k: usize) -> usize {
    if k == 0 {
        input
    } else if config.is_skip(k) {
        config.width + input
    } else {
        config.width
    }
}

fn affine<T: Real>(input: &Array2<T>, layer: &Dense<T>) -> Array2<T> {
    let mut z = input.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

fn dense_grad<T: Real>(dz: &Array2<T>, input: &Array2<T>) -> Dense<T> {
    Dense {
        weight: dz.t().dot(input),
        bias: dz.sum_axis(Axis(0)),
    }
}

pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

pub fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}
