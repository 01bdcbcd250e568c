//! Continuous volumetric super-resolution with cube-sampled implicit fields.
//!
//! A pair of coordinate MLPs (coarse and fine) is fit to a low-resolution
//! volume. Each voxel is rendered by integrating the fields over spherical
//! shells inside a small cube centered on it. At inference the fields are
//! queried on any grid or oblique plane.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod numerics;
pub mod rendering;
pub mod sampling;
pub mod seeds;
pub mod synthesis;
pub mod training;
pub mod volume;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/volumes.md")]
    pub struct Volumes;
    #[doc = include_str!("../../../book/src/fields.md")]
    pub struct Fields;
    #[doc = include_str!("../../../book/src/cube-sampling.md")]
    pub struct CubeSampling;
    #[doc = include_str!("../../../book/src/isotropic-rendering.md")]
    pub struct IsotropicRendering;
    #[doc = include_str!("../../../book/src/training.md")]
    pub struct Training;
    #[doc = include_str!("../../../book/src/synthesis.md")]
    pub struct Synthesis;
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub struct Metrics;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
