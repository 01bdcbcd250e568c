//! Slice and volume generation from a trained field: oblique planes,
//! rigid transforms, arbitrary-scale grids and whole-volume upsampling.
//!
//! Target grids are mapped into the training volume's continuous voxel
//! frame by the ratio of extents. Voxel `i` covers `[i, i + 1)`:
//!
//! ```text
//! LR (4 voxels)  |   0   |   1   |   2   |   3   |
//! HR (8 voxels)  | 0 | 1 | 2 | 3 | 4 | 5 | 6 | 7 |
//!                  ^ HR center 0.5 maps to LR 0.25
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rendering::{render_points, FieldPair, RenderSettings};
use crate::volume::{NormalizationMap, Volume};

/// Rotation by `angle` radians about `axis` (normalized internally).
pub fn rodrigues(axis: [f64; 3], angle: f64) -> Result<Matrix3<f64>> {
    let n = Vector3::from(axis);
    let norm = n.norm();
    if !(norm > 1e-12 && norm.is_finite()) {
        return Err(Error::InvalidAxis(format!("{axis:?} has no direction")));
    }
    if !angle.is_finite() {
        return Err(Error::InvalidAxis(format!("angle {angle} is not finite")));
    }
    let n = n / norm;
    let k = n.cross_matrix();
    Ok(Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(axis: [f64; 3], angle: f64, translation: [f64; 3]) -> Result<Self> {
        Ok(Self {
            rotation: rodrigues(axis, angle)?,
            translation: Vector3::from(translation),
        })
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        (r.transpose() * r - Matrix3::identity()).abs().max() <= tol
            && (r.determinant() - 1.0).abs() <= tol
    }
}

/// A rectangular grid on a plane. `origin` is the grid center; pixel
/// `(r, c)` sits at `origin + (c - (cols-1)/2) pitch u + (r - (rows-1)/2) pitch v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub origin: [f64; 3],
    pub u: [f64; 3],
    pub v: [f64; 3],
    /// Voxels per pixel.
    pub pitch: f64,
    pub rows: usize,
    pub cols: usize,
}

impl PlaneSpec {
    /// Axial plane at height `z` covering the volume at one pixel per voxel.
    pub fn axial(dims: [usize; 3], z: f64) -> Self {
        Self {
            origin: [dims[0] as f64 / 2.0, dims[1] as f64 / 2.0, z],
            u: [1.0, 0.0, 0.0],
            v: [0.0, 1.0, 0.0],
            pitch: 1.0,
            rows: dims[1],
            cols: dims[0],
        }
    }

    /// The axial plane through the volume center.
    pub fn base(dims: [usize; 3]) -> Self {
        Self::axial(dims, dims[2] as f64 / 2.0)
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let u = Vector3::from(self.u);
        let v = Vector3::from(self.v);
        (u.norm() - 1.0).abs() <= tol && (v.norm() - 1.0).abs() <= tol && u.dot(&v).abs() <= tol
    }

    pub fn point(&self, row: usize, col: usize) -> [f64; 3] {
        let a = (col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pitch;
        let b = (row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pitch;
        [
            self.origin[0] + a * self.u[0] + b * self.v[0],
            self.origin[1] + a * self.u[1] + b * self.v[1],
            self.origin[2] + a * self.u[2] + b * self.v[2],
        ]
    }

    /// All grid points in row-major order.
    pub fn points(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self.point(r, c));
            }
        }
        out
    }

    /// Physical extent `(rows, cols)` in voxels.
    pub fn extent(&self) -> (f64, f64) {
        (self.rows as f64 * self.pitch, self.cols as f64 * self.pitch)
    }
}

/// Rotates the plane about `pivot`, then translates it.
pub fn transform_plane(base: &PlaneSpec, t: &RigidTransform, pivot: [f64; 3]) -> PlaneSpec {
    let r = &t.rotation;
    let p = Vector3::from(pivot);
    let origin = p + r * (Vector3::from(base.origin) - p) + t.translation;
    let u = r * Vector3::from(base.u);
    let v = r * Vector3::from(base.v);
    PlaneSpec {
        origin: origin.into(),
        u: u.into(),
        v: v.into(),
        ..*base
    }
}

/// Divides the pitch by `delta` and multiplies the resolution by it, so the
/// covered extent stays fixed.
pub fn scale_plane(plane: &PlaneSpec, delta: f64) -> Result<PlaneSpec> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidFactor(format!("scale {delta} must be positive")));
    }
    let scaled = |n: usize| ((n as f64 * delta).round() as usize).max(1);
    Ok(PlaneSpec {
        pitch: plane.pitch / delta,
        rows: scaled(plane.rows),
        cols: scaled(plane.cols),
        ..*plane
    })
}

/// A rendered slice. `valid[i]` is false where the pixel center falls
/// outside the field's normalization ball.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
    pub valid: Vec<bool>,
}

pub fn render_slice(
    pair: &FieldPair<f32>,
    settings: &RenderSettings,
    plane: &PlaneSpec,
    seed: u64,
) -> Result<Slice> {
    if !plane.is_orthonormal(1e-9) {
        return Err(Error::InvalidInput("plane axes must be orthonormal".into()));
    }
    let points = plane.points();
    let valid = points
        .iter()
        .map(|p| NormalizationMap::inside(pair.map.normalize(*p)))
        .collect();
    let data = render_points(pair, settings, &points, seed)?;
    Ok(Slice {
        rows: plane.rows,
        cols: plane.cols,
        data,
        valid,
    })
}

/// Target dims for per-axis scale factors, rounded to the nearest voxel.
pub fn scaled_dims(dims: [usize; 3], factors: [f64; 3]) -> Result<[usize; 3]> {
    let mut out = [0; 3];
    for a in 0..3 {
        let f = factors[a];
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::InvalidFactor(format!("axis {a} scale {f} must be positive")));
        }
        out[a] = ((dims[a] as f64 * f).round() as usize).max(1);
    }
    Ok(out)
}

/// Continuous source coordinates of every voxel center of `target`, in
/// x-fastest order.
pub fn target_grid(source: [usize; 3], target: [usize; 3]) -> Vec<[f64; 3]> {
    let ratio = [
        source[0] as f64 / target[0] as f64,
        source[1] as f64 / target[1] as f64,
        source[2] as f64 / target[2] as f64,
    ];
    let mut out = Vec::with_capacity(target.iter().product());
    for z in 0..target[2] {
        for y in 0..target[1] {
            for x in 0..target[0] {
                out.push([
                    (x as f64 + 0.5) * ratio[0],
                    (y as f64 + 0.5) * ratio[1],
                    (z as f64 + 0.5) * ratio[2],
                ]);
            }
        }
    }
    out
}

/// Renders the field on a `target` grid spanning the training volume.
pub fn upsample_volume(
    pair: &FieldPair<f32>,
    settings: &RenderSettings,
    target: [usize; 3],
    seed: u64,
) -> Result<Volume> {
    if target.contains(&0) {
        return Err(Error::InvalidInput(format!("target dims {target:?} must be positive")));
    }
    let points = target_grid(pair.map.dims, target);
    let data = render_points(pair, settings, &points, seed)?;
    Volume::new(target, data)
}

/// Binary 16-bit big-endian PGM with intensities mapped from `[0, 1]`.
pub fn encode_pgm16(slice: &Slice) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", slice.cols, slice.rows).into_bytes();
    out.reserve(slice.data.len() * 2);
    for &v in &slice.data {
        let q = (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Parses what [`encode_pgm16`] writes.
pub fn decode_pgm16(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let bad = |m: &str| Error::format("pgm", m.to_string());
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(bad("expected a 16-bit P5 image"));
    }
    let cols: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let rows: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let body = bytes.get(pos..pos + rows * cols * 2).ok_or_else(|| bad("truncated pixels"))?;
    let data = body
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / 65535.0)
        .collect();
    Ok((rows, cols, data))
}

#[derive(Serialize)]
struct SliceSidecar<'a> {
    plane: &'a PlaneSpec,
    invalid_pixels: usize,
    valid: Vec<u8>,
}

/// Writes `path` (PGM) and `path.json` with the plane and validity mask.
pub fn save_slice(path: &Path, slice: &Slice, plane: &PlaneSpec) -> Result<()> {
    fs::write(path, encode_pgm16(slice)).map_err(|e| Error::at_path(path, e))?;
    let sidecar = SliceSidecar {
        plane,
        invalid_pixels: slice.valid.iter().filter(|v| !**v).count(),
        valid: slice.valid.iter().map(|&v| u8::from(v)).collect(),
    };
    let json_path = path.with_extension("json");
    let mut f = fs::File::create(&json_path).map_err(|e| Error::at_path(&json_path, e))?;
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    f.write_all(b"\n").map_err(|e| Error::at_path(&json_path, e))?;
    Ok(())
}
