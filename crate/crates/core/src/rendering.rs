//! Volume-rendering quadratures and the coarse-to-fine rendering of target
//! points.
//!
//! Both quadratures share one compositing core. For sorted sample
//! coordinates `r_1 <= ... <= r_N` with widths `d_i = r_{i+1} - r_i`
//! (and `r_{N+1}` the segment end), the weight of sample `i` is
//!
//! ```text
//! w_i = g_i (1 - exp(-sigma_i d_i)) exp(-sum_{j<i} g_j sigma_j d_j)
//! ```
//!
//! with `g_i = 4 pi r_i^2` for the isotropic (spherical-shell) quadrature and
//! `g_i = 1` for the classical ray quadrature. The rendered value is
//! `sum_i w_i c_i`. Transmittance is exclusive, so the first sample is never
//! attenuated by itself.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{encode_into, FieldModel, ForwardCache, Gradients, Real};
use crate::sampling::{
    hierarchical_points, hierarchical_ray_points, sample_cube_uniform, sample_ray_stratified,
    CubeSpec, Norm, RaySpec, SampleSet,
};
use crate::seeds;
use crate::volume::NormalizationMap;

/// Encoded coordinates are kept this far inside the unit ball.
const BALL_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RendererMode {
    #[default]
    Isotropic,
    Ray,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    #[default]
    Cube,
    Ray,
}

impl std::str::FromStr for RendererMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isotropic" => Ok(Self::Isotropic),
            "ray" => Ok(Self::Ray),
            other => Err(Error::Config(format!(
                "unknown renderer {other:?} (expected isotropic or ray)"
            ))),
        }
    }
}

impl std::str::FromStr for SamplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cube" => Ok(Self::Cube),
            "ray" => Ok(Self::Ray),
            other => Err(Error::Config(format!(
                "unknown sampler {other:?} (expected cube or ray)"
            ))),
        }
    }
}

/// Which radius multiplies the densities inside the isotropic transmittance.
///
/// `Summand` uses `r_j^2` inside the sum, the discretization of
/// `int_0^r s^2 sigma(s) ds`. `Outer` uses the current sample's `r_i^2` for the
/// whole sum; it exists to measure how much that variant differs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ShellIndex {
    #[default]
    Summand,
    Outer,
}

/// Rendered value plus its compositing weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature<T> {
    pub value: T,
    pub weights: Vec<T>,
}

fn check_inputs<T: Real>(radii: &[T], sigma: &[T], c: &[T], end: T) -> Result<()> {
    if sigma.len() != radii.len() || c.len() != radii.len() {
        return Err(Error::Contract(format!(
            "length mismatch: {} radii, {} densities, {} intensities",
            radii.len(),
            sigma.len(),
            c.len()
        )));
    }
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if radii.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Contract("sample radii must be sorted non-decreasing".into()));
    }
    if let Some(&last) = radii.last() {
        if last > end + T::lit(1e-9) || radii[0] < T::zero() {
            return Err(Error::Contract(format!(
                "sample radii must lie in [0, {end}], found [{}, {last}]",
                radii[0]
            )));
        }
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if sigma.iter().any(|s| !(*s >= T::zero()) || !s.is_finite()) {
        return Err(Error::Contract("densities must be finite and non-negative".into()));
    }
    Ok(())
}

#[inline]
fn shell_factor<T: Real>(mode: RendererMode, r: T) -> T {
    match mode {
        RendererMode::Isotropic => T::lit(4.0 * std::f64::consts::PI) * r * r,
        RendererMode::Ray => T::one(),
    }
}

#[inline]
fn widths<T: Real>(radii: &[T], end: T) -> impl Iterator<Item = T> + '_ {
    (0..radii.len()).map(move |i| {
        let next = if i + 1 < radii.len() { radii[i + 1] } else { end };
        (next - radii[i]).max(T::zero())
    })
}

fn composite<T: Real>(
    mode: RendererMode,
    shell: ShellIndex,
    radii: &[T],
    sigma: &[T],
    c: &[T],
    end: T,
) -> Quadrature<T> {
    let mut weights = Vec::with_capacity(radii.len());
    let mut value = T::zero();
    // Running exponent; its meaning depends on `shell`.
    let mut acc = T::zero();
    for (i, d) in widths(radii, end).enumerate() {
        let g = shell_factor(mode, radii[i]);
        let exponent = match shell {
            ShellIndex::Summand => acc,
            ShellIndex::Outer => g * acc,
        };
        let w = g * -(-sigma[i] * d).exp_m1() * (-exponent).exp();
        weights.push(w);
        value += w * c[i];
        acc += match shell {
            ShellIndex::Summand => g * sigma[i] * d,
            ShellIndex::Outer => sigma[i] * d,
        };
    }
    Quadrature { value, weights }
}

/// Gradient of the composited value with respect to every `sigma_i` and
/// `c_i`, scaled by `upstream`, written into `d_sigma`/`d_c`.
#[allow(clippy::too_many_arguments)]
fn composite_backward<T: Real>(
    mode: RendererMode,
    shell: ShellIndex,
    radii: &[T],
    sigma: &[T],
    c: &[T],
    end: T,
    weights: &[T],
    upstream: T,
    d_sigma: &mut [T],
    d_c: &mut [T],
) {
    let n = radii.len();
    let d: Vec<T> = widths(radii, end).collect();
    // tail[k] = sum_{i>k} w_i c_i (times g_i for the Outer variant)
    let mut tail = T::zero();
    let mut acc = T::zero();
    let mut exps = Vec::with_capacity(n);
    for i in 0..n {
        let g = shell_factor(mode, radii[i]);
        exps.push(match shell {
            ShellIndex::Summand => acc,
            ShellIndex::Outer => g * acc,
        });
        acc += match shell {
            ShellIndex::Summand => g * sigma[i] * d[i],
            ShellIndex::Outer => sigma[i] * d[i],
        };
    }
    for k in (0..n).rev() {
        let g = shell_factor(mode, radii[k]);
        let transmittance = (-exps[k]).exp();
        let local = g * d[k] * (-sigma[k] * d[k]).exp() * transmittance * c[k];
        let coupling = match shell {
            ShellIndex::Summand => g * d[k] * tail,
            ShellIndex::Outer => d[k] * tail,
        };
        d_sigma[k] = upstream * (local - coupling);
        d_c[k] = upstream * weights[k];
        tail += match shell {
            ShellIndex::Summand => weights[k] * c[k],
            ShellIndex::Outer => g * weights[k] * c[k],
        };
    }
}

/// Spherical-shell quadrature over sorted radii in `[0, max_radius]`.
pub fn isotropic_quadrature<T: Real>(
    radii: &[T],
    sigma: &[T],
    c: &[T],
    max_radius: T,
) -> Result<Quadrature<T>> {
    isotropic_quadrature_with(radii, sigma, c, max_radius, ShellIndex::Summand)
}

pub fn isotropic_quadrature_with<T: Real>(
    radii: &[T],
    sigma: &[T],
    c: &[T],
    max_radius: T,
    shell: ShellIndex,
) -> Result<Quadrature<T>> {
    check_inputs(radii, sigma, c, max_radius)?;
    Ok(composite(RendererMode::Isotropic, shell, radii, sigma, c, max_radius))
}

/// Classical alpha compositing along sorted ray positions ending at `far`.
pub fn ray_quadrature<T: Real>(t: &[T], sigma: &[T], c: &[T], far: T) -> Result<Quadrature<T>> {
    check_inputs(t, sigma, c, far)?;
    Ok(composite(RendererMode::Ray, ShellIndex::Summand, t, sigma, c, far))
}

/// Sampling and rendering parameters for a target point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub sampler: SamplerMode,
    pub renderer: RendererMode,
    /// Cube edge (or ray segment length) in voxels.
    pub edge_length: f64,
    pub norm: Norm,
    pub n_coarse: usize,
    pub n_fine: usize,
    #[serde(skip)]
    pub shell: ShellIndex,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            sampler: SamplerMode::Cube,
            renderer: RendererMode::Isotropic,
            edge_length: 1.0,
            norm: Norm::L2,
            n_coarse: 64,
            n_fine: 128,
            shell: ShellIndex::Summand,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.edge_length.is_finite() && self.edge_length > 0.0) {
            return Err(Error::Config(format!(
                "edge length must be positive, got {}",
                self.edge_length
            )));
        }
        if self.n_coarse == 0 {
            return Err(Error::Config("at least one coarse sample is required".into()));
        }
        Ok(())
    }

    /// Same geometry with different sample counts (e.g. test-time 8 + 8).
    pub fn with_counts(&self, n_coarse: usize, n_fine: usize) -> Self {
        Self {
            n_coarse,
            n_fine,
            ..self.clone()
        }
    }
}

/// One point to render. `axis` selects the ray direction in ray-sampler mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub center: [f64; 3],
    pub axis: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput<T> {
    pub coarse: T,
    pub fine: T,
    /// Coarse compositing weights, in sorted sample order.
    pub weights: Vec<T>,
}

/// The coarse and fine fields plus the voxel-to-field coordinate map.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPair<T> {
    pub coarse: FieldModel<T>,
    pub fine: FieldModel<T>,
    pub map: NormalizationMap,
}

/// Everything one pass (coarse or fine) needs for its backward step.
#[derive(Debug)]
pub struct PassTrace<T> {
    pub sets: Vec<SampleSet>,
    pub intensity: Array1<T>,
    pub density: Array1<T>,
    pub values: Vec<T>,
    pub weights: Vec<Vec<T>>,
    cache: Option<ForwardCache<T>>,
}

#[derive(Debug)]
pub struct BatchTrace<T> {
    pub coarse: PassTrace<T>,
    pub fine: PassTrace<T>,
}

impl<T: Real> BatchTrace<T> {
    pub fn outputs(&self) -> Vec<RenderOutput<T>> {
        (0..self.coarse.values.len())
            .map(|b| RenderOutput {
                coarse: self.coarse.values[b],
                fine: self.fine.values[b],
                weights: self.coarse.weights[b].clone(),
            })
            .collect()
    }
}

enum Geometry {
    Cube(CubeSpec),
    Ray(RaySpec),
}

fn geometry(settings: &RenderSettings, target: &Target) -> Result<Geometry> {
    Ok(match settings.sampler {
        SamplerMode::Cube => Geometry::Cube(CubeSpec::new(
            target.center,
            settings.edge_length,
            settings.norm,
        )?),
        SamplerMode::Ray => Geometry::Ray(RaySpec {
            center: target.center,
            axis: target.axis % 3,
            length: settings.edge_length,
        }),
    })
}

fn draw_coarse<R: Rng + ?Sized>(geom: &Geometry, n: usize, rng: &mut R) -> SampleSet {
    match geom {
        Geometry::Cube(spec) => sample_cube_uniform(spec, n, rng),
        Geometry::Ray(spec) => sample_ray_stratified(spec, n, rng),
    }
}

fn draw_fine<R: Rng + ?Sized>(
    geom: &Geometry,
    coarse: &SampleSet,
    weights: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    match geom {
        Geometry::Cube(spec) => hierarchical_points(spec, coarse, weights, n, rng),
        Geometry::Ray(spec) => hierarchical_ray_points(spec, coarse, weights, n, rng),
    }
}

/// Encodes every point of every set, row-major, clamped into the open ball.
pub fn encode_sets<T: Real>(
    model: &FieldModel<T>,
    map: &NormalizationMap,
    sets: &[SampleSet],
) -> Result<Array2<T>> {
    let rows: usize = sets.iter().map(SampleSet::len).sum();
    let width = model.input_dim();
    let mut out = Array2::<T>::zeros((rows, width));
    let flat = out.as_slice_mut().expect("standard layout");
    let mut row = 0;
    let bound = 1.0 - BALL_MARGIN;
    for set in sets {
        for p in &set.points {
            let n = map.normalize(*p);
            let x = [
                T::lit(n[0].clamp(-bound, bound)),
                T::lit(n[1].clamp(-bound, bound)),
                T::lit(n[2].clamp(-bound, bound)),
            ];
            encode_into(&x, model.encoder(), &mut flat[row * width..(row + 1) * width])?;
            row += 1;
        }
    }
    Ok(out)
}

/// Runs one field over fixed sample sets and composites each set.
pub fn run_pass<T: Real>(
    model: &FieldModel<T>,
    map: &NormalizationMap,
    settings: &RenderSettings,
    sets: Vec<SampleSet>,
    keep_cache: bool,
) -> Result<PassTrace<T>> {
    let encoded = encode_sets(model, map, &sets)?;
    let (out, cache) = if keep_cache {
        let (out, cache) = model.forward(encoded.view())?;
        (out, Some(cache))
    } else {
        (model.predict(encoded.view())?, None)
    };
    let intensity = out.intensity.as_slice().expect("contiguous").to_vec();
    let density = out.density.as_slice().expect("contiguous").to_vec();
    if let Some(i) = (0..density.len()).find(|&i| !(density[i].is_finite() && intensity[i].is_finite())) {
        return Err(Error::NonFinite(format!(
            "sample {i}: intensity {:?}, density {:?}",
            intensity[i], density[i]
        )));
    }
    let mut values = Vec::with_capacity(sets.len());
    let mut weights = Vec::with_capacity(sets.len());
    let mut start = 0;
    for set in &sets {
        let end = start + set.len();
        let radii: Vec<T> = set.radii.iter().map(|&r| T::lit(r)).collect();
        let max = T::lit(set.max_radius);
        let (sig, col) = (&density[start..end], &intensity[start..end]);
        check_inputs(&radii, sig, col, max)?;
        let q = composite(settings.renderer, settings.shell, &radii, sig, col, max);
        values.push(q.value);
        weights.push(q.weights);
        start = end;
    }
    Ok(PassTrace {
        sets,
        intensity: out.intensity,
        density: out.density,
        values,
        weights,
        cache,
    })
}

/// Coarse then fine rendering of a batch of targets. Each target draws its
/// samples from its own seeded stream, so results do not depend on batch
/// composition or order.
pub fn render_batch<T: Real>(
    pair: &FieldPair<T>,
    settings: &RenderSettings,
    targets: &[Target],
    keep_cache: bool,
) -> Result<BatchTrace<T>> {
    settings.validate()?;
    let mut rngs: Vec<ChaCha8Rng> = targets.iter().map(|t| seeds::rng(t.seed)).collect();
    let geoms = targets
        .iter()
        .map(|t| geometry(settings, t))
        .collect::<Result<Vec<_>>>()?;
    let coarse_sets: Vec<SampleSet> = geoms
        .iter()
        .zip(rngs.iter_mut())
        .map(|(g, rng)| draw_coarse(g, settings.n_coarse, rng))
        .collect();
    let coarse = run_pass(&pair.coarse, &pair.map, settings, coarse_sets, keep_cache)?;
    let mut fine_sets = Vec::with_capacity(targets.len());
    for ((g, rng), (set, w)) in geoms
        .iter()
        .zip(rngs.iter_mut())
        .zip(coarse.sets.iter().zip(&coarse.weights))
    {
        let w64: Vec<f64> = w.iter().map(|v| v.as_f64()).collect();
        fine_sets.push(draw_fine(g, set, &w64, settings.n_fine, rng)?);
    }
    let fine = run_pass(&pair.fine, &pair.map, settings, fine_sets, keep_cache)?;
    Ok(BatchTrace { coarse, fine })
}

/// Renders with caller-supplied sample sets for both passes.
pub fn render_fixed<T: Real>(
    pair: &FieldPair<T>,
    settings: &RenderSettings,
    coarse_sets: Vec<SampleSet>,
    fine_sets: Vec<SampleSet>,
    keep_cache: bool,
) -> Result<BatchTrace<T>> {
    let coarse = run_pass(&pair.coarse, &pair.map, settings, coarse_sets, keep_cache)?;
    let fine = run_pass(&pair.fine, &pair.map, settings, fine_sets, keep_cache)?;
    Ok(BatchTrace { coarse, fine })
}

fn pass_backward<T: Real>(
    model: &FieldModel<T>,
    settings: &RenderSettings,
    pass: &PassTrace<T>,
    upstream: &[T],
) -> Result<Gradients<T>> {
    let cache = pass
        .cache
        .as_ref()
        .ok_or_else(|| Error::Internal("render trace was built without caches".into()))?;
    let rows = pass.intensity.len();
    let mut d_sigma = vec![T::zero(); rows];
    let mut d_c = vec![T::zero(); rows];
    let intensity = pass.intensity.as_slice().expect("contiguous");
    let density = pass.density.as_slice().expect("contiguous");
    let mut start = 0;
    for (b, set) in pass.sets.iter().enumerate() {
        let end = start + set.len();
        let radii: Vec<T> = set.radii.iter().map(|&r| T::lit(r)).collect();
        composite_backward(
            settings.renderer,
            settings.shell,
            &radii,
            &density[start..end],
            &intensity[start..end],
            T::lit(set.max_radius),
            &pass.weights[b],
            upstream[b],
            &mut d_sigma[start..end],
            &mut d_c[start..end],
        );
        start = end;
    }
    model.backward(
        cache,
        Array1::from_vec(d_c).view(),
        Array1::from_vec(d_sigma).view(),
    )
}

/// Parameter gradients of both fields given `dL/dC_coarse` and `dL/dC_fine`
/// per target. Sample positions are treated as constants.
pub fn backward_batch<T: Real>(
    pair: &FieldPair<T>,
    settings: &RenderSettings,
    trace: &BatchTrace<T>,
    d_coarse: &[T],
    d_fine: &[T],
) -> Result<(Gradients<T>, Gradients<T>)> {
    let n = trace.coarse.values.len();
    if d_coarse.len() != n || d_fine.len() != n {
        return Err(Error::Internal(format!(
            "upstream gradients for {}/{} targets, trace has {n}",
            d_coarse.len(),
            d_fine.len()
        )));
    }
    Ok((
        pass_backward(&pair.coarse, settings, &trace.coarse, d_coarse)?,
        pass_backward(&pair.fine, settings, &trace.fine, d_fine)?,
    ))
}

/// Renders a single target.
pub fn render_point<T: Real>(
    pair: &FieldPair<T>,
    settings: &RenderSettings,
    target: Target,
) -> Result<RenderOutput<T>> {
    let trace = render_batch(pair, settings, &[target], false)?;
    Ok(trace.outputs().remove(0))
}

/// Number of points rendered per work item in [`render_points`].
const RENDER_CHUNK: usize = 256;

/// Inference over many positions. Each position draws from a stream keyed
/// by `(seed, position)`, so values do not depend on order or batching. In
/// ray-sampler mode the three axis-aligned renderings are averaged. Values
/// are clamped to `[0, 1]`.
pub fn render_points(
    pair: &FieldPair<f32>,
    settings: &RenderSettings,
    centers: &[[f64; 3]],
    seed: u64,
) -> Result<Vec<f32>> {
    let axes: &[usize] = match settings.sampler {
        SamplerMode::Cube => &[0],
        SamplerMode::Ray => &[0, 1, 2],
    };
    let chunks: Vec<Result<Vec<f32>>> = centers
        .par_chunks(RENDER_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0f32; chunk.len()];
            for &axis in axes {
                let targets: Vec<Target> = chunk
                    .iter()
                    .map(|&center| Target {
                        center,
                        axis,
                        seed: seeds::point_seed(seed, center, axis as u64),
                    })
                    .collect();
                let trace = render_batch(pair, settings, &targets, false)?;
                for (a, v) in acc.iter_mut().zip(&trace.fine.values) {
                    *a += *v;
                }
            }
            let k = axes.len() as f32;
            Ok(acc.into_iter().map(|v| (v / k).clamp(0.0, 1.0)).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(centers.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}
