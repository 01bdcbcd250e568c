//! Training configuration: built-in profile, then the TOML file, then flags.

use std::fs;
use std::path::Path;

use anyhow::Context;
use clap::Args;

use cubefield::rendering::{RendererMode, SamplerMode};
use cubefield::sampling::Norm;
use cubefield::training::{LossMode, Profile, TrainConfig};
use cubefield::Error;

/// Flags that override individual configuration fields.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training iterations.
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, value_parser = parse::<SamplerMode>)]
    pub sampler: Option<SamplerMode>,
    #[arg(long, value_parser = parse::<RendererMode>)]
    pub renderer: Option<RendererMode>,
    #[arg(long, value_parser = parse::<LossMode>)]
    pub loss: Option<LossMode>,
    /// Cube edge length in voxels.
    #[arg(long)]
    pub edge: Option<f64>,
    /// Distance norm: 2 or inf.
    #[arg(long, value_parser = parse::<Norm>)]
    pub norm: Option<Norm>,
    #[arg(long)]
    pub n_coarse: Option<usize>,
    #[arg(long)]
    pub n_fine: Option<usize>,
    #[arg(long)]
    pub lr_start: Option<f64>,
    #[arg(long)]
    pub lr_end: Option<f64>,
}

pub fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Overrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($flag:ident => $($field:ident).+) => {
                if let Some(v) = self.$flag {
                    cfg.$($field).+ = v;
                }
            };
        }
        set!(seed => seed);
        set!(iters => max_iters);
        set!(batch => batch_size);
        set!(sampler => render.sampler);
        set!(renderer => render.renderer);
        set!(loss => loss);
        set!(edge => render.edge_length);
        set!(norm => render.norm);
        set!(n_coarse => render.n_coarse);
        set!(n_fine => render.n_fine);
        set!(lr_start => lr_start);
        set!(lr_end => lr_end);
    }
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Resolves the configuration. A `profile` key in the file selects the
/// base profile unless `--profile` was given.
pub fn resolve(
    profile: Option<Profile>,
    file: Option<&Path>,
    overrides: &Overrides,
) -> anyhow::Result<TrainConfig> {
    let mut table = match file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Path {
                path: path.to_path_buf(),
                source: e,
            })?;
            let v: toml::Table = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            Some(v)
        }
        None => None,
    };
    let file_profile = table
        .as_mut()
        .and_then(|t| t.remove("profile"))
        .map(|v| match v {
            toml::Value::String(s) => s.parse::<Profile>(),
            other => Err(Error::Config(format!("profile must be a string, got {other}"))),
        })
        .transpose()?;
    let base = TrainConfig::for_profile(profile.or(file_profile).unwrap_or(Profile::Desk));
    let mut cfg = match table {
        Some(t) => {
            let mut value = toml::Value::try_from(&base).context("serializing base profile")?;
            merge(&mut value, toml::Value::Table(t));
            value
                .try_into::<TrainConfig>()
                .map_err(|e| Error::Config(format!("config file: {e}")))?
        }
        None => base,
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// The resolved configuration as TOML, loadable with `--config`.
pub fn to_toml(cfg: &TrainConfig) -> anyhow::Result<String> {
    Ok(toml::to_string_pretty(cfg)?)
}
