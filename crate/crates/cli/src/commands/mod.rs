pub mod ablate;
pub mod phantom;
pub mod render;
pub mod train;
pub mod upsample;

use std::fs;
use std::path::Path;

use clap::ValueEnum;

use cubefield::Error;

/// Which axes a scale factor applies to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum ScaleMode {
    /// All three axes.
    #[default]
    #[value(name = "3d")]
    ThreeD,
    /// Only the slice axis z.
    Volumetric,
}

impl ScaleMode {
    pub fn factors(self, scale: f64) -> [f64; 3] {
        match self {
            ScaleMode::ThreeD => [scale; 3],
            ScaleMode::Volumetric => [1.0, 1.0, scale],
        }
    }
}

/// Parses `a,b,c`.
pub fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("{p:?} is not a number"))?;
    }
    Ok(out)
}

/// Parses `N` (a cube) or `a,b,c`.
pub fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse().map_err(|_| format!("{p:?} is not a voxel count")))
        .collect::<Result<_, _>>()?;
    match nums[..] {
        [n] => Ok([n; 3]),
        [a, b, c] => Ok([a, b, c]),
        _ => Err(format!("expected N or a,b,c, got {s:?}")),
    }
}

pub fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::Path {
            path: dir.to_path_buf(),
            source: e,
        }
        .into()
    })
}
