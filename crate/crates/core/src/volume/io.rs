use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{nifti, Volume};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VolumeFormat {
    /// `<name>.f32` little-endian samples plus `<name>.json` sidecar.
    Raw,
    /// Uncompressed single-file NIfTI-1.
    Nifti,
}

impl VolumeFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("nii") => Ok(Self::Nifti),
            Some("f32") | Some("json") => Ok(Self::Raw),
            Some("gz") => Err(Error::format(
                "extension",
                "compressed NIfTI (.nii.gz) is not supported",
            )),
            _ => Err(Error::format(
                "extension",
                format!("cannot infer volume format of {}", path.display()),
            )),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    dims: [usize; 3],
    spacing: Option<[f64; 3]>,
    intensity_min: f64,
    intensity_max: f64,
    order: String,
}

/// Data and sidecar paths for a raw volume named by either file or the bare stem.
pub fn raw_paths(path: &Path) -> (PathBuf, PathBuf) {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("f32") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut data = base.clone().into_os_string();
    data.push(".f32");
    let mut side = base.into_os_string();
    side.push(".json");
    (data.into(), side.into())
}

pub fn save_raw(v: &Volume, path: &Path) -> Result<()> {
    let (data_path, side_path) = raw_paths(path);
    let mut bytes = Vec::with_capacity(v.len() * 4);
    for x in v.data() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(&data_path, bytes).map_err(|e| Error::at_path(&data_path, e))?;
    let sidecar = Sidecar {
        dims: v.dims(),
        spacing: v.spacing,
        intensity_min: v.intensity_min,
        intensity_max: v.intensity_max,
        order: "xyz".into(),
    };
    let text = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&side_path, text).map_err(|e| Error::at_path(&side_path, e))?;
    Ok(())
}

/// Loads a raw volume. Samples already in `[0, 1]` are kept bit for bit;
/// otherwise they are min-max rescaled and the sidecar range is replaced by
/// the observed one.
pub fn load_raw(path: &Path) -> Result<Volume> {
    let (data_path, side_path) = raw_paths(path);
    let text = fs::read_to_string(&side_path).map_err(|e| Error::at_path(&side_path, e))?;
    let side: Sidecar = serde_json::from_str(&text)
        .map_err(|e| Error::format("sidecar", e.to_string()))?;
    if side.order != "xyz" {
        return Err(Error::format("order", format!("expected \"xyz\", got {:?}", side.order)));
    }
    if side.dims.contains(&0) {
        return Err(Error::format("dims", format!("{:?} has a zero extent", side.dims)));
    }
    let bytes = fs::read(&data_path).map_err(|e| Error::at_path(&data_path, e))?;
    let n = side.dims.iter().product::<usize>();
    if bytes.len() != n * 4 {
        return Err(Error::format(
            "data",
            format!("expected {} bytes for {:?}, found {}", n * 4, side.dims, bytes.len()),
        ));
    }
    let samples: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut v = if samples.iter().all(|s| (0.0..=1.0).contains(s)) {
        let mut v = Volume::new(side.dims, samples)?;
        v.intensity_min = side.intensity_min;
        v.intensity_max = side.intensity_max;
        v
    } else {
        let values: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
        Volume::from_intensities(side.dims, &values)
            .map_err(|e| Error::format("data", e.to_string()))?
    };
    v.spacing = side.spacing;
    Ok(v)
}

pub fn load_volume(path: &Path, format: VolumeFormat) -> Result<Volume> {
    match format {
        VolumeFormat::Raw => load_raw(path),
        VolumeFormat::Nifti => {
            let bytes = fs::read(path).map_err(|e| Error::at_path(path, e))?;
            nifti::read_nifti(&bytes)
        }
    }
}

/// Reads a volume, choosing the format from the file extension.
pub fn read_volume(path: &Path) -> Result<Volume> {
    load_volume(path, VolumeFormat::from_path(path)?)
}

/// Writes a volume, choosing the format from the file extension.
pub fn write_volume(v: &Volume, path: &Path) -> Result<()> {
    match VolumeFormat::from_path(path)? {
        VolumeFormat::Raw => save_raw(v, path),
        VolumeFormat::Nifti => nifti::save_nifti(v, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut v = Volume::from_fn([3, 4, 5], |x, y, z| ((x * 7 + y * 3 + z) % 11) as f32 / 10.0)
            .unwrap();
        v.intensity_min = -1024.0;
        v.intensity_max = 3071.0;
        v.spacing = Some([0.8, 0.8, 2.5]);
        let path = dir.path().join("vol");
        save_raw(&v, &path).unwrap();
        let back = load_raw(&dir.path().join("vol.f32")).unwrap();
        assert_eq!(back, v);
        for (a, b) in back.data().iter().zip(v.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn raw_out_of_range_is_rescaled() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("ct");
        let (data, side) = raw_paths(&base);
        let vals = [-100.0f32, 0.0, 100.0, 300.0];
        let bytes: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&data, bytes).unwrap();
        fs::write(
            &side,
            r#"{"dims":[2,2,1],"spacing":null,"intensity_min":0,"intensity_max":1,"order":"xyz"}"#,
        )
        .unwrap();
        let v = load_raw(&base).unwrap();
        assert_eq!(v.data(), &[0.0, 0.25, 0.5, 1.0]);
        assert_eq!((v.intensity_min, v.intensity_max), (-100.0, 300.0));
    }

    #[test]
    fn raw_wrong_length_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("short");
        let (data, side) = raw_paths(&base);
        fs::write(&data, [0u8; 12]).unwrap();
        fs::write(
            &side,
            r#"{"dims":[2,2,1],"spacing":null,"intensity_min":0,"intensity_max":1,"order":"xyz"}"#,
        )
        .unwrap();
        let err = load_raw(&base).unwrap_err();
        assert!(err.is_format(), "{err}");
        assert!(err.to_string().contains("data"));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(VolumeFormat::from_path(Path::new("a/b.nii")).unwrap(), VolumeFormat::Nifti);
        assert_eq!(VolumeFormat::from_path(Path::new("b.f32")).unwrap(), VolumeFormat::Raw);
        assert!(VolumeFormat::from_path(Path::new("b.nii.gz")).is_err());
    }
}
