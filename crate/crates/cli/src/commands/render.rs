use std::path::PathBuf;

use log::info;
use serde::Serialize;

use cubefield::checkpoint::load_checkpoint;
use cubefield::synthesis::{render_slice, save_slice, scale_plane, transform_plane, PlaneSpec, RigidTransform};

use super::{create_dir, parse_triple};
use crate::manifest::{hash_file, RunManifest};
use crate::usage;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Rotation axis `x,y,z`, applied about the volume center.
    #[arg(long, value_parser = parse_triple, default_value = "0,0,1", allow_hyphen_values = true)]
    pub axis: [f64; 3],
    /// Rotation angles in degrees; one slice per angle.
    #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
    pub angle: Vec<f64>,
    /// Translation in voxels, applied after the rotation.
    #[arg(long, value_parser = parse_triple, default_value = "0,0,0", allow_hyphen_values = true)]
    pub offset: [f64; 3],
    /// Pixels per voxel.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Full turn in equal steps, e.g. `--orbit axis=z steps=36`. Replaces
    /// `--axis` and `--angle`.
    #[arg(long, num_args = 1..=2, value_name = "KEY=VALUE")]
    pub orbit: Vec<String>,
    /// Seed for inference sampling; defaults to the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, PartialEq)]
struct Orbit {
    axis: [f64; 3],
    steps: usize,
}

fn parse_axis(s: &str) -> anyhow::Result<[f64; 3]> {
    Ok(match s {
        "x" => [1.0, 0.0, 0.0],
        "y" => [0.0, 1.0, 0.0],
        "z" => [0.0, 0.0, 1.0],
        v => parse_triple(v).map_err(|e| usage(format!("orbit axis: {e}")))?,
    })
}

fn parse_orbit(tokens: &[String]) -> anyhow::Result<Orbit> {
    let mut orbit = Orbit {
        axis: [0.0, 0.0, 1.0],
        steps: 36,
    };
    for t in tokens {
        match t.split_once('=') {
            Some(("axis", v)) => orbit.axis = parse_axis(v)?,
            Some(("steps", v)) => {
                orbit.steps = v
                    .parse()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| usage(format!("orbit steps must be a positive integer, got {v:?}")))?
            }
            _ => return Err(usage(format!("unknown orbit setting {t:?} (expected axis=.. or steps=..)"))),
        }
    }
    Ok(orbit)
}

#[derive(Serialize)]
struct View {
    file: String,
    axis: [f64; 3],
    angle_deg: f64,
    offset: [f64; 3],
    scale: f64,
}

pub fn run(a: Args, argv: &[String]) -> anyhow::Result<()> {
    let (axis, angles) = if a.orbit.is_empty() {
        (a.axis, a.angle.clone())
    } else {
        let o = parse_orbit(&a.orbit)?;
        let step = 360.0 / o.steps as f64;
        (o.axis, (0..o.steps).map(|k| k as f64 * step).collect())
    };
    if let Some(bad) = angles.iter().find(|v| !v.is_finite()) {
        return Err(usage(format!("angle {bad} is not finite")));
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let cfg = ckpt.config();
    let seed = a.seed.unwrap_or(cfg.seed);
    let settings = cfg.test_settings();
    let pair = &ckpt.state.pair;
    let dims = pair.map.dims;
    let pivot = [dims[0] as f64 / 2.0, dims[1] as f64 / 2.0, dims[2] as f64 / 2.0];
    let base = PlaneSpec::base(dims);
    let views: Vec<View> = angles
        .iter()
        .enumerate()
        .map(|(i, &angle)| View {
            file: format!("slice-{i:04}.pgm"),
            axis,
            angle_deg: angle,
            offset: a.offset,
            scale: a.scale,
        })
        .collect();
    let mut manifest = RunManifest::new("render", argv, seed, &views)?;
    manifest.inputs.push(hash_file(&a.checkpoint)?);
    manifest.checkpoint = Some(a.checkpoint.clone());
    create_dir(&a.out_dir)?;
    for view in &views {
        let t = RigidTransform::new(axis, view.angle_deg.to_radians(), a.offset)?;
        let plane = scale_plane(&transform_plane(&base, &t, pivot), a.scale)?;
        let slice = render_slice(pair, &settings, &plane, seed)?;
        let path = a.out_dir.join(&view.file);
        save_slice(&path, &slice, &plane)?;
        info!("{} ({}x{}, {} deg)", path.display(), slice.cols, slice.rows, view.angle_deg);
        manifest.outputs.push(hash_file(&path)?);
    }
    manifest.finish("ok");
    manifest.write(&a.out_dir.join("manifest.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn orbit_settings() {
        let o = parse_orbit(&tokens(&["axis=x", "steps=4"])).unwrap();
        assert_eq!(o, Orbit { axis: [1.0, 0.0, 0.0], steps: 4 });
        let o = parse_orbit(&tokens(&["axis=1,1,0"])).unwrap();
        assert_eq!(o.axis, [1.0, 1.0, 0.0]);
        assert_eq!(o.steps, 36);
        assert!(parse_orbit(&tokens(&["steps=0"])).is_err());
        assert!(parse_orbit(&tokens(&["spin=2"])).is_err());
    }
}
