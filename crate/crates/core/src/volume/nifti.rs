//! Minimal NIfTI-1 (single file, uncompressed) reader and writer.
//!
//! Supported datatypes: uint8, int16, float32. Endianness is detected from
//! `sizeof_hdr`.

use std::fs;
use std::path::Path;

use super::Volume;
use crate::error::{Error, Result};

pub const NIFTI_HEADER_SIZE: usize = 348;
const DEFAULT_VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

#[derive(Clone, Copy)]
struct Reader<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Reader<'_> {
    fn array<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.bytes[at..at + N]);
        if self.big_endian {
            b.reverse();
        }
        b
    }

    fn i16(&self, at: usize) -> i16 {
        i16::from_le_bytes(self.array(at))
    }

    fn i32(&self, at: usize) -> i32 {
        i32::from_le_bytes(self.array(at))
    }

    fn f32(&self, at: usize) -> f32 {
        f32::from_le_bytes(self.array(at))
    }
}

/// Parses a NIfTI-1 byte buffer and normalizes intensities to `[0, 1]`.
///
/// Float samples already inside `[0, 1]` are kept bit for bit, with
/// `scl_slope`/`scl_inter` recorded as the original range; this is the
/// layout [`write_nifti`] produces. Everything else is min-max rescaled.
pub fn read_nifti(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < NIFTI_HEADER_SIZE {
        return Err(Error::format(
            "header",
            format!("truncated: {} of {NIFTI_HEADER_SIZE} bytes", bytes.len()),
        ));
    }
    let le = i32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let big_endian = match le {
        348 => false,
        _ if le.swap_bytes() == 348 => true,
        _ => {
            return Err(Error::format(
                "sizeof_hdr",
                format!("expected 348, found {le}"),
            ))
        }
    };
    let r = Reader { bytes, big_endian };
    debug_assert_eq!(r.i32(0), 348);

    match &bytes[344..348] {
        b"n+1\0" => {}
        b"ni1\0" => {
            return Err(Error::format(
                "magic",
                "two-file (.hdr/.img) NIfTI is not supported",
            ))
        }
        other => {
            return Err(Error::format("magic", format!("unexpected bytes {other:?}")));
        }
    }

    let ndim = r.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::format("dim[0]", format!("{ndim} is outside 1..=7")));
    }
    let mut dims = [1usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        if (a as i16) < ndim {
            let v = r.i16(42 + 2 * a);
            if v < 1 {
                return Err(Error::format(format!("dim[{}]", a + 1), format!("{v} < 1")));
            }
            *d = v as usize;
        }
    }
    for a in 3..ndim as usize {
        let v = r.i16(42 + 2 * a);
        if v > 1 {
            return Err(Error::format(
                format!("dim[{}]", a + 1),
                format!("only 3D volumes are supported, found extent {v}"),
            ));
        }
    }

    let datatype = r.i16(70);
    let width = match datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => return Err(Error::UnsupportedDatatype(other)),
    };
    let bitpix = r.i16(72);
    if bitpix as usize != width * 8 {
        return Err(Error::format(
            "bitpix",
            format!("{bitpix} disagrees with datatype {datatype}"),
        ));
    }

    let vox_offset = r.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= NIFTI_HEADER_SIZE as f32) {
        return Err(Error::format("vox_offset", format!("invalid value {vox_offset}")));
    }
    let offset = vox_offset as usize;
    let n = dims.iter().product::<usize>();
    let end = offset + n * width;
    if bytes.len() < end {
        return Err(Error::format(
            "data",
            format!("truncated: need {end} bytes, file has {}", bytes.len()),
        ));
    }

    let slope = r.f32(112);
    let inter = r.f32(116);
    let scale = slope != 0.0 && slope.is_finite();
    let data = Reader {
        bytes: &bytes[offset..end],
        big_endian,
    };
    let stored_unit: Option<Vec<f32>> = (datatype == DT_FLOAT32)
        .then(|| (0..n).map(|i| data.f32(4 * i)).collect::<Vec<f32>>())
        .filter(|s| s.iter().all(|x| (0.0..=1.0).contains(x)));
    let mut v = match stored_unit {
        Some(samples) => {
            let mut v = Volume::new(dims, samples)?;
            if scale {
                v.intensity_min = inter as f64;
                v.intensity_max = inter as f64 + slope as f64;
            }
            v
        }
        None => {
            let values: Vec<f64> = (0..n)
                .map(|i| {
                    let raw = match datatype {
                        DT_UINT8 => data.bytes[i] as f64,
                        DT_INT16 => data.i16(2 * i) as f64,
                        _ => data.f32(4 * i) as f64,
                    };
                    if scale {
                        raw * slope as f64 + inter as f64
                    } else {
                        raw
                    }
                })
                .collect();
            Volume::from_intensities(dims, &values).map_err(|e| Error::format("data", e.to_string()))?
        }
    };
    let pix = [r.f32(80), r.f32(84), r.f32(88)];
    if pix.iter().all(|p| p.is_finite() && *p > 0.0) {
        v.spacing = Some([pix[0] as f64, pix[1] as f64, pix[2] as f64]);
    }
    Ok(v)
}

/// Serializes as little-endian float32 NIfTI-1. Stored samples are the
/// normalized intensities; `scl_slope`/`scl_inter` map them back to the
/// original range.
pub fn write_nifti(v: &Volume) -> Vec<u8> {
    let mut h = vec![0u8; DEFAULT_VOX_OFFSET];
    let put_i16 = |h: &mut Vec<u8>, at: usize, x: i16| h[at..at + 2].copy_from_slice(&x.to_le_bytes());
    let put_f32 = |h: &mut Vec<u8>, at: usize, x: f32| h[at..at + 4].copy_from_slice(&x.to_le_bytes());
    h[0..4].copy_from_slice(&348i32.to_le_bytes());
    let dims = v.dims();
    put_i16(&mut h, 40, 3);
    for (a, &d) in dims.iter().enumerate() {
        put_i16(&mut h, 42 + 2 * a, d as i16);
    }
    for a in 3..7 {
        put_i16(&mut h, 42 + 2 * a, 1);
    }
    put_i16(&mut h, 70, DT_FLOAT32);
    put_i16(&mut h, 72, 32);
    let spacing = v.spacing.unwrap_or([1.0; 3]);
    put_f32(&mut h, 76, 1.0);
    for (a, &s) in spacing.iter().enumerate() {
        put_f32(&mut h, 80 + 4 * a, s as f32);
    }
    put_f32(&mut h, 108, DEFAULT_VOX_OFFSET as f32);
    let range = v.intensity_max - v.intensity_min;
    let slope = if range > 0.0 { range } else { 1.0 };
    put_f32(&mut h, 112, slope as f32);
    put_f32(&mut h, 116, v.intensity_min as f32);
    h[344..348].copy_from_slice(b"n+1\0");
    h.reserve(v.len() * 4);
    for x in v.data() {
        h.extend_from_slice(&x.to_le_bytes());
    }
    h
}

pub fn save_nifti(v: &Volume, path: &Path) -> Result<()> {
    fs::write(path, write_nifti(v)).map_err(|e| Error::at_path(path, e))
}
