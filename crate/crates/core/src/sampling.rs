//! Sample placement around a target point: uniform cube draws, the
//! piecewise-constant PDF built from coarse weights, inverse transform
//! sampling of radii, and spherical-to-Cartesian conversion under the
//! l2 or l-infinity norm.
//!
//! Also hosts the axis-aligned ray segments used by the ray-sampling baseline.
//! All coordinates are continuous voxel coordinates.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    #[default]
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    LInf,
}

impl Norm {
    #[inline]
    pub fn of(self, v: [f64; 3]) -> f64 {
        match self {
            Norm::L2 => (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt(),
            Norm::LInf => v[0].abs().max(v[1].abs()).max(v[2].abs()),
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "linf" | "∞" => Ok(Norm::LInf),
            other => Err(Error::InvalidInput(format!("norm must be 2 or inf, got {other:?}"))),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Norm::L2 => "2",
            Norm::LInf => "inf",
        })
    }
}

/// Axis-aligned cube of edge `edge_length` centered on `center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubeSpec {
    pub center: [f64; 3],
    pub edge_length: f64,
    pub norm: Norm,
}

impl CubeSpec {
    pub fn new(center: [f64; 3], edge_length: f64, norm: Norm) -> Result<Self> {
        if !(edge_length.is_finite() && edge_length > 0.0) {
            return Err(Error::Config(format!("cube edge must be positive, got {edge_length}")));
        }
        Ok(Self {
            center,
            edge_length,
            norm,
        })
    }

    /// Distance from the center to a corner under the cube's norm.
    pub fn max_radius(&self) -> f64 {
        let h = self.edge_length / 2.0;
        self.norm.of([h, h, h])
    }
}

/// Sample points around a center, sorted by ascending radius.
///
/// For ray segments `radii` holds the distance from the segment's near end
/// and `max_radius` its length.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub center: [f64; 3],
    pub points: Vec<[f64; 3]>,
    pub radii: Vec<f64>,
    pub max_radius: f64,
    /// `order[i]` is the draw index of the i-th sorted sample.
    pub order: Vec<usize>,
}

impl SampleSet {
    /// Sorts `points`/`radii` by radius; ties keep draw order.
    pub fn from_draws(
        center: [f64; 3],
        points: Vec<[f64; 3]>,
        radii: Vec<f64>,
        max_radius: f64,
    ) -> Self {
        debug_assert_eq!(points.len(), radii.len());
        let mut order: Vec<usize> = (0..radii.len()).collect();
        order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
        Self {
            center,
            points: order.iter().map(|&i| points[i]).collect(),
            radii: order.iter().map(|&i| radii[i]).collect(),
            max_radius,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

/// `n` i.i.d. uniform points in the cube.
pub fn sample_cube_uniform<R: Rng + ?Sized>(spec: &CubeSpec, n: usize, rng: &mut R) -> SampleSet {
    let mut points = Vec::with_capacity(n);
    let mut radii = Vec::with_capacity(n);
    for _ in 0..n {
        let offset = [
            (rng.random::<f64>() - 0.5) * spec.edge_length,
            (rng.random::<f64>() - 0.5) * spec.edge_length,
            (rng.random::<f64>() - 0.5) * spec.edge_length,
        ];
        radii.push(spec.norm.of(offset));
        points.push(add(spec.center, offset));
    }
    SampleSet::from_draws(spec.center, points, radii, spec.max_radius())
}

/// Normalizes non-negative weights into bin probabilities. All-zero (or
/// non-finite) input falls back to a uniform PDF.
pub fn weights_to_pdf(weights: &[f64]) -> Vec<f64> {
    let clean: Vec<f64> = weights
        .iter()
        .map(|&w| if w.is_finite() && w > 0.0 { w } else { 0.0 })
        .collect();
    let total: f64 = clean.iter().sum();
    if total > 0.0 && total.is_finite() {
        clean.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / weights.len().max(1) as f64; weights.len()]
    }
}

/// Bin edges for sorted coarse radii: midpoints between neighbors, with
/// the end bins extended to `[0, max_radius]`.
pub fn bin_edges(radii: &[f64], max_radius: f64) -> Vec<f64> {
    let mut edges = Vec::with_capacity(radii.len() + 1);
    edges.push(0.0);
    edges.extend(radii.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(max_radius);
    edges
}

/// Draws `n` radii by inverting the CDF that is linear inside each bin.
pub fn sample_radii_its<R: Rng + ?Sized>(
    pdf: &[f64],
    edges: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if edges.len() != pdf.len() + 1 || pdf.is_empty() {
        return Err(Error::Contract(format!(
            "{} bins need {} edges, got {}",
            pdf.len(),
            pdf.len() + 1,
            edges.len()
        )));
    }
    if edges.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract("bin edges must be non-decreasing".into()));
    }
    let mut cdf = Vec::with_capacity(pdf.len() + 1);
    let mut acc = 0.0;
    cdf.push(0.0);
    for &p in pdf {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let last = *edges.last().unwrap();
    Ok((0..n)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            // Last bin whose lower CDF bound is <= u; zero-mass bins are skipped.
            let bin = cdf[1..].partition_point(|&c| c <= u).min(pdf.len() - 1);
            let mass = pdf[bin];
            let t = if mass > 0.0 {
                ((u - cdf[bin]) / mass).clamp(0.0, 1.0)
            } else {
                0.5
            };
            (edges[bin] + t * (edges[bin + 1] - edges[bin])).min(last)
        })
        .collect())
}

/// Converts `(r, phi, theta)` to an offset. Under l2 this is the usual
/// spherical parameterization; under l-infinity the unit direction is
/// rescaled so its l-infinity norm equals `r`.
pub fn spherical_to_cartesian(r: f64, phi: f64, theta: f64, norm: Norm) -> [f64; 3] {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let dir = [sp * ct, sp * st, cp];
    let scale = match norm {
        Norm::L2 => r,
        Norm::LInf => r / Norm::LInf.of(dir),
    };
    [dir[0] * scale, dir[1] * scale, dir[2] * scale]
}

/// Fine-pass points: radii drawn from the coarse weights by ITS, directions
/// with `phi ~ U[0, pi]` and `theta ~ U[0, 2 pi]`, merged with the coarse set
/// and re-sorted. Fine points may leave the cube.
pub fn hierarchical_points<R: Rng + ?Sized>(
    spec: &CubeSpec,
    coarse: &SampleSet,
    weights: &[f64],
    n_fine: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    if n_fine == 0 {
        return Ok(coarse.clone());
    }
    let fine_radii = its_from_coarse(coarse, weights, n_fine, rng)?;
    let fine_points: Vec<[f64; 3]> = fine_radii
        .iter()
        .map(|&r| {
            let phi = rng.random::<f64>() * PI;
            let theta = rng.random::<f64>() * TAU;
            add(spec.center, spherical_to_cartesian(r, phi, theta, spec.norm))
        })
        .collect();
    Ok(merge(coarse, fine_points, fine_radii))
}

fn its_from_coarse<R: Rng + ?Sized>(
    coarse: &SampleSet,
    weights: &[f64],
    n_fine: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if weights.len() != coarse.len() {
        return Err(Error::Contract(format!(
            "{} weights for {} coarse samples",
            weights.len(),
            coarse.len()
        )));
    }
    let pdf = weights_to_pdf(weights);
    let edges = bin_edges(&coarse.radii, coarse.max_radius);
    sample_radii_its(&pdf, &edges, n_fine, rng)
}

fn merge(coarse: &SampleSet, fine_points: Vec<[f64; 3]>, fine_radii: Vec<f64>) -> SampleSet {
    let mut points = coarse.points.clone();
    points.extend(fine_points);
    let mut radii = coarse.radii.clone();
    radii.extend(fine_radii);
    SampleSet::from_draws(coarse.center, points, radii, coarse.max_radius)
}

/// Axis-aligned segment of `length` centered on `center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaySpec {
    pub center: [f64; 3],
    pub axis: usize,
    pub length: f64,
}

impl RaySpec {
    fn at(&self, t: f64) -> [f64; 3] {
        let mut p = self.center;
        p[self.axis] += t - self.length / 2.0;
        p
    }
}

/// Stratified samples along a ray segment, one per equal-length stratum.
pub fn sample_ray_stratified<R: Rng + ?Sized>(spec: &RaySpec, n: usize, rng: &mut R) -> SampleSet {
    let radii: Vec<f64> = (0..n)
        .map(|i| (i as f64 + rng.random::<f64>()) * spec.length / n as f64)
        .collect();
    let points = radii.iter().map(|&t| spec.at(t)).collect();
    SampleSet::from_draws(spec.center, points, radii, spec.length)
}

/// Fine-pass ray samples drawn by ITS over the coarse weights and merged.
pub fn hierarchical_ray_points<R: Rng + ?Sized>(
    spec: &RaySpec,
    coarse: &SampleSet,
    weights: &[f64],
    n_fine: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    if n_fine == 0 {
        return Ok(coarse.clone());
    }
    let fine_t = its_from_coarse(coarse, weights, n_fine, rng)?;
    let fine_points = fine_t.iter().map(|&t| spec.at(t)).collect();
    Ok(merge(coarse, fine_points, fine_t))
}

#[inline]
fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
