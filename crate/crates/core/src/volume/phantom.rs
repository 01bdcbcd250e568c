//! Analytic phantoms. Each phantom is a closed-form function of the
//! fractional position `u in [0, 1]^3`, so ground truth is available at any
//! resolution.

use std::f64::consts::TAU;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Volume;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    GaussianBlobs,
    SheppLoganLike,
    TrigField,
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-blobs" => Ok(Self::GaussianBlobs),
            "shepp-logan-like" => Ok(Self::SheppLoganLike),
            "trig-field" => Ok(Self::TrigField),
            other => Err(Error::InvalidInput(format!("unknown phantom kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
struct Wave {
    freq: [f64; 3],
    phase: f64,
    amplitude: f64,
}

#[derive(Clone, Debug)]
struct Blob {
    center: [f64; 3],
    inv_two_var: f64,
    amplitude: f64,
}

#[derive(Clone, Debug)]
struct Ellipsoid {
    center: [f64; 3],
    semi: [f64; 3],
    /// Rotation about z, radians.
    angle: f64,
    value: f64,
}

#[derive(Clone, Debug)]
enum Shape {
    Waves(Vec<Wave>),
    Blobs(Vec<Blob>),
    Ellipsoids(Vec<Ellipsoid>),
}

/// A seeded closed-form phantom.
#[derive(Clone, Debug)]
pub struct Phantom {
    kind: PhantomKind,
    shape: Shape,
}

/// Edge softness of the ellipsoid phantom, in fractional units.
const ELLIPSOID_EDGE: f64 = 0.04;

impl Phantom {
    pub fn new(kind: PhantomKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let shape = match kind {
            PhantomKind::TrigField => Shape::Waves(
                (0..3)
                    .map(|_| Wave {
                        freq: [
                            rng.random_range(0.3..1.1),
                            rng.random_range(0.3..1.1),
                            rng.random_range(0.3..1.1),
                        ],
                        phase: rng.random_range(0.0..TAU),
                        amplitude: rng.random_range(0.08..0.15),
                    })
                    .collect(),
            ),
            PhantomKind::GaussianBlobs => Shape::Blobs(
                (0..6)
                    .map(|_| {
                        let s: f64 = rng.random_range(0.1..0.22);
                        Blob {
                            center: [
                                rng.random_range(0.2..0.8),
                                rng.random_range(0.2..0.8),
                                rng.random_range(0.2..0.8),
                            ],
                            inv_two_var: 1.0 / (2.0 * s * s),
                            amplitude: rng.random_range(0.15..0.4),
                        }
                    })
                    .collect(),
            ),
            PhantomKind::SheppLoganLike => {
                // Head-like layout with seeded jitter; values are additive.
                let base: [([f64; 3], [f64; 3], f64, f64); 7] = [
                    ([0.5, 0.5, 0.5], [0.35, 0.45, 0.4], 0.0, 0.8),
                    ([0.5, 0.49, 0.5], [0.32, 0.42, 0.37], 0.0, -0.5),
                    ([0.61, 0.5, 0.45], [0.06, 0.16, 0.12], -0.3, -0.15),
                    ([0.39, 0.5, 0.45], [0.08, 0.2, 0.12], 0.3, -0.15),
                    ([0.5, 0.68, 0.5], [0.1, 0.12, 0.1], 0.0, 0.25),
                    ([0.5, 0.32, 0.55], [0.05, 0.05, 0.05], 0.0, 0.3),
                    ([0.44, 0.28, 0.5], [0.04, 0.03, 0.06], 0.0, 0.35),
                ];
                Shape::Ellipsoids(
                    base.iter()
                        .map(|&(c, s, angle, value)| Ellipsoid {
                            center: [
                                c[0] + rng.random_range(-0.01..0.01),
                                c[1] + rng.random_range(-0.01..0.01),
                                c[2] + rng.random_range(-0.01..0.01),
                            ],
                            semi: s,
                            angle,
                            value,
                        })
                        .collect(),
                )
            }
        };
        Self { kind, shape }
    }

    pub fn kind(&self) -> PhantomKind {
        self.kind
    }

    /// Intensity at fractional position `u`, clamped to `[0, 1]`.
    pub fn value(&self, u: [f64; 3]) -> f64 {
        let v = match &self.shape {
            Shape::Waves(waves) => {
                0.5 + waves
                    .iter()
                    .map(|w| {
                        let arg = w.freq[0] * u[0] + w.freq[1] * u[1] + w.freq[2] * u[2];
                        w.amplitude * (TAU * arg + w.phase).sin()
                    })
                    .sum::<f64>()
            }
            Shape::Blobs(blobs) => {
                0.1 + blobs
                    .iter()
                    .map(|b| {
                        let d2: f64 = (0..3).map(|a| (u[a] - b.center[a]).powi(2)).sum();
                        b.amplitude * (-d2 * b.inv_two_var).exp()
                    })
                    .sum::<f64>()
            }
            Shape::Ellipsoids(items) => items
                .iter()
                .map(|e| {
                    let (s, c) = e.angle.sin_cos();
                    let dx = u[0] - e.center[0];
                    let dy = u[1] - e.center[1];
                    let dz = u[2] - e.center[2];
                    let rx = c * dx + s * dy;
                    let ry = -s * dx + c * dy;
                    let q = ((rx / e.semi[0]).powi(2)
                        + (ry / e.semi[1]).powi(2)
                        + (dz / e.semi[2]).powi(2))
                    .sqrt();
                    let min_semi = e.semi.iter().cloned().fold(f64::INFINITY, f64::min);
                    // Smooth indicator of q < 1 with edge width in fractional units.
                    let t = (1.0 - q) * min_semi / ELLIPSOID_EDGE;
                    e.value / (1.0 + (-4.0 * t).exp())
                })
                .sum::<f64>(),
        };
        v.clamp(0.0, 1.0)
    }

    /// Samples at the voxel centers of a `dims` grid.
    pub fn render(&self, dims: [usize; 3]) -> Result<Volume> {
        Volume::from_fn(dims, |x, y, z| {
            let c = Volume::voxel_center(x, y, z);
            let u = [
                c[0] / dims[0] as f64,
                c[1] / dims[1] as f64,
                c[2] / dims[2] as f64,
            ];
            self.value(u) as f32
        })
    }
}

pub fn make_phantom(kind: PhantomKind, dims: [usize; 3], seed: u64) -> Result<Volume> {
    if dims.iter().any(|&d| d < 8) {
        return Err(Error::InvalidInput(format!("phantom dims must be >= 8, got {dims:?}")));
    }
    Phantom::new(kind, seed).render(dims)
}
