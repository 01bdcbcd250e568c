//! Dense scalar volumes, the voxel-to-field coordinate map, resampling,
//! file I/O and analytic phantoms.
//!
//! Two coordinate conventions are used throughout the crate:
//!
//! * **continuous voxel coordinates**: voxel `(i, j, k)` occupies the unit
//!   cell `[i, i+1) x [j, j+1) x [k, k+1)`, so its center sits at
//!   `(i + 0.5, j + 0.5, k + 0.5)` and the whole grid spans `[0, H] x [0, W] x [0, L]`.
//!   All sampling geometry (cubes, rays, planes) lives in this frame.
//! * **index coordinates**: voxel centers at integers, used only by
//!   [`trilinear_sample`]. Index = continuous - 0.5.

mod io;
mod nifti;
mod phantom;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_raw, load_volume, raw_paths, read_volume, save_raw, write_volume, VolumeFormat,
};
pub use nifti::{read_nifti, save_nifti, write_nifti, NIFTI_HEADER_SIZE};
pub use phantom::{make_phantom, Phantom, PhantomKind};

/// A dense `H x W x L` grid of intensities in `[0, 1]`, x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    data: Vec<f32>,
    /// Original intensity range before normalization.
    pub intensity_min: f64,
    pub intensity_max: f64,
    /// Voxel size in millimetres, when known.
    pub spacing: Option<[f64; 3]>,
}

impl Volume {
    /// Wraps already-normalized data.
    pub fn new(dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected} voxels for {dims:?}"),
                found: data.len().to_string(),
            });
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "normalized intensities must lie in [0, 1], found {v}"
            )));
        }
        Ok(Self {
            dims,
            data,
            intensity_min: 0.0,
            intensity_max: 1.0,
            spacing: None,
        })
    }

    /// Min-max rescales arbitrary intensities into `[0, 1]`, keeping the
    /// original range as metadata. A constant input becomes all zeros.
    pub fn from_intensities(dims: [usize; 3], values: &[f64]) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims[0] * dims[1] * dims[2];
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected} voxels for {dims:?}"),
                found: values.len().to_string(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite intensity {v}")));
        }
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = hi - lo;
        let data = if range > 0.0 {
            values
                .iter()
                .map(|&v| (((v - lo) / range) as f32).clamp(0.0, 1.0))
                .collect()
        } else {
            log::warn!("degenerate intensity range [{lo}, {hi}]; volume loads as zeros");
            vec![0.0; expected]
        };
        Ok(Self {
            dims,
            data,
            intensity_min: lo,
            intensity_max: hi,
            spacing: None,
        })
    }

    /// Builds a volume by evaluating `f` at every voxel index.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    /// Inverse of [`Volume::index`].
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Center of voxel `(x, y, z)` in continuous voxel coordinates.
    pub fn voxel_center(x: usize, y: usize, z: usize) -> [f64; 3] {
        [x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5]
    }

    pub fn with_metadata_of(mut self, other: &Volume) -> Self {
        self.intensity_min = other.intensity_min;
        self.intensity_max = other.intensity_max;
        self.spacing = other.spacing;
        self
    }

    /// Extracts a 2D slice as a row-major `(rows, cols, data)` triple.
    ///
    /// `axis` is the fixed axis: 2 gives axial (x along columns, y along rows),
    /// 1 coronal (x, z), 0 sagittal (y, z).
    pub fn slice(&self, axis: usize, index: usize) -> (usize, usize, Vec<f64>) {
        let [h, w, l] = self.dims;
        match axis {
            0 => {
                let mut out = Vec::with_capacity(w * l);
                for z in 0..l {
                    for y in 0..w {
                        out.push(self.get(index, y, z) as f64);
                    }
                }
                (l, w, out)
            }
            1 => {
                let mut out = Vec::with_capacity(h * l);
                for z in 0..l {
                    for x in 0..h {
                        out.push(self.get(x, index, z) as f64);
                    }
                }
                (l, h, out)
            }
            _ => {
                let mut out = Vec::with_capacity(h * w);
                for y in 0..w {
                    for x in 0..h {
                        out.push(self.get(x, y, index) as f64);
                    }
                }
                (w, h, out)
            }
        }
    }
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidInput(format!("volume dims must be positive, got {dims:?}")));
    }
    Ok(())
}

/// Affine map from continuous voxel coordinates into the padded open
/// unit ball of the field, `x -> 2 (x - H/2) / (H + 2P)` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationMap {
    pub dims: [usize; 3],
    /// Padding in voxels.
    pub padding: f64,
}

impl NormalizationMap {
    pub fn new(dims: [usize; 3], padding: f64) -> Self {
        Self { dims, padding }
    }

    /// Padding that keeps every cube of edge `edge_length` around a voxel
    /// center inside the ball.
    pub fn default_padding(edge_length: f64) -> f64 {
        edge_length.ceil() + 1.0
    }

    #[inline]
    pub fn normalize(&self, x: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for a in 0..3 {
            let d = self.dims[a] as f64;
            out[a] = 2.0 * (x[a] - d / 2.0) / (d + 2.0 * self.padding);
        }
        out
    }

    #[inline]
    pub fn denormalize(&self, xn: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for a in 0..3 {
            let d = self.dims[a] as f64;
            out[a] = xn[a] * (d + 2.0 * self.padding) / 2.0 + d / 2.0;
        }
        out
    }

    /// Whether a normalized point lies in the open unit ball `||x||_inf < 1`.
    pub fn inside(xn: [f64; 3]) -> bool {
        xn.iter().all(|v| v.abs() < 1.0)
    }

    pub fn center(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 / 2.0,
            self.dims[1] as f64 / 2.0,
            self.dims[2] as f64 / 2.0,
        ]
    }
}

pub fn normalize_coord(x: [f64; 3], map: &NormalizationMap) -> [f64; 3] {
    map.normalize(x)
}

pub fn denormalize_coord(xn: [f64; 3], map: &NormalizationMap) -> [f64; 3] {
    map.denormalize(xn)
}

/// Trilinear interpolation at index coordinates (voxel centers at
/// integers), clamped to `[0, dim - 1]` per axis.
pub fn trilinear_sample(v: &Volume, x: [f64; 3]) -> f64 {
    let dims = v.dims();
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let max = (dims[a] - 1) as f64;
        let c = x[a].clamp(0.0, max);
        let f = c.floor();
        base[a] = (f as usize).min(dims[a].saturating_sub(2));
        frac[a] = c - base[a] as f64;
        if dims[a] == 1 {
            base[a] = 0;
            frac[a] = 0.0;
        }
    }
    let step = |a: usize| usize::from(dims[a] > 1);
    let mut acc = 0.0;
    for corner in 0..8 {
        let mut w = 1.0;
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let hi = (corner >> a) & 1 == 1;
            idx[a] = base[a] + if hi { step(a) } else { 0 };
            w *= if hi { frac[a] } else { 1.0 - frac[a] };
        }
        if w != 0.0 {
            acc += w * v.get(idx[0], idx[1], idx[2]) as f64;
        }
    }
    acc
}

/// Output dims for per-axis degradation factors.
pub fn downsampled_dims(dims: [usize; 3], factors: [f64; 3]) -> Result<[usize; 3]> {
    let mut out = [0usize; 3];
    for a in 0..3 {
        let f = factors[a];
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::InvalidFactor(format!("axis {a} factor {f} must be positive")));
        }
        out[a] = (dims[a] as f64 / f).round() as usize;
        if out[a] == 0 {
            return Err(Error::InvalidFactor(format!(
                "axis {a}: factor {f} shrinks {} voxels to nothing",
                dims[a]
            )));
        }
    }
    Ok(out)
}

/// Nearest-neighbor degradation. Output voxel `i` copies the input voxel
/// containing its center mapped through the ratio of extents.
pub fn downsample_nearest(v: &Volume, factors: [f64; 3]) -> Result<Volume> {
    let dims = v.dims();
    let out_dims = downsampled_dims(dims, factors)?;
    let pick = |a: usize, i: usize| -> usize {
        let pos = (i as f64 + 0.5) * dims[a] as f64 / out_dims[a] as f64;
        (pos.floor() as usize).min(dims[a] - 1)
    };
    let xs: Vec<usize> = (0..out_dims[0]).map(|i| pick(0, i)).collect();
    let ys: Vec<usize> = (0..out_dims[1]).map(|i| pick(1, i)).collect();
    let zs: Vec<usize> = (0..out_dims[2]).map(|i| pick(2, i)).collect();
    let out = Volume::from_fn(out_dims, |x, y, z| v.get(xs[x], ys[y], zs[z]))?;
    Ok(out.with_metadata_of(v))
}

/// Resamples `v` onto a grid of `dims` with trilinear interpolation, using
/// the same extent-ratio alignment as the field upsampler.
pub fn resample_trilinear(v: &Volume, dims: [usize; 3]) -> Result<Volume> {
    let src = v.dims();
    let ratio = [
        src[0] as f64 / dims[0] as f64,
        src[1] as f64 / dims[1] as f64,
        src[2] as f64 / dims[2] as f64,
    ];
    let out = Volume::from_fn(dims, |x, y, z| {
        let c = Volume::voxel_center(x, y, z);
        let p = [
            c[0] * ratio[0] - 0.5,
            c[1] * ratio[1] - 0.5,
            c[2] * ratio[2] - 0.5,
        ];
        (trilinear_sample(v, p) as f32).clamp(0.0, 1.0)
    })?;
    Ok(out.with_metadata_of(v))
}
