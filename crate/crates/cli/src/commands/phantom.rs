use std::path::PathBuf;

use clap::ValueEnum;
use log::info;
use serde::Serialize;

use cubefield::volume::{downsample_nearest, make_phantom, write_volume, PhantomKind};

use super::{create_dir, parse_dims, ScaleMode};
use crate::config::parse;
use crate::manifest::{hash_volume, RunManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// `.f32` samples plus `.json` sidecar.
    Raw,
    Nifti,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_parser = parse::<PhantomKind>, default_value = "shepp-logan-like")]
    pub kind: PhantomKind,
    /// HR grid size, `N` or `a,b,c`.
    #[arg(long, value_parser = parse_dims, default_value = "32")]
    pub dims: [usize; 3],
    /// Degradation factor.
    #[arg(long, default_value_t = 2.0)]
    pub scale: f64,
    #[arg(long, value_enum, default_value_t = ScaleMode::ThreeD)]
    pub mode: ScaleMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Nifti)]
    pub format: Format,
}

#[derive(Serialize)]
struct Snapshot {
    kind: PhantomKind,
    dims: [usize; 3],
    factors: [f64; 3],
}

pub fn run(a: Args, argv: &[String]) -> anyhow::Result<()> {
    let factors = a.mode.factors(a.scale);
    let snapshot = Snapshot {
        kind: a.kind,
        dims: a.dims,
        factors,
    };
    let mut manifest = RunManifest::new("phantom", argv, a.seed, &snapshot)?;
    let hr = make_phantom(a.kind, a.dims, a.seed)?;
    let lr = downsample_nearest(&hr, factors)?;
    create_dir(&a.out_dir)?;
    let ext = match a.format {
        Format::Raw => "f32",
        Format::Nifti => "nii",
    };
    let hr_path = a.out_dir.join(format!("hr.{ext}"));
    let lr_path = a.out_dir.join(format!("lr.{ext}"));
    write_volume(&hr, &hr_path)?;
    write_volume(&lr, &lr_path)?;
    info!("HR {:?} -> {}, LR {:?} -> {}", hr.dims(), hr_path.display(), lr.dims(), lr_path.display());
    manifest.outputs = vec![hash_volume(&hr_path)?, hash_volume(&lr_path)?];
    manifest.finish("ok");
    manifest.write(&a.out_dir.join("manifest.json"))
}
