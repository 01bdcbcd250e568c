use std::path::PathBuf;
use std::time::Instant;

use clap::ValueEnum;
use log::info;
use serde::Serialize;

use cubefield::metrics::MetricReport;
use cubefield::rendering::{RendererMode, SamplerMode};
use cubefield::sampling::Norm;
use cubefield::synthesis::upsample_volume;
use cubefield::training::{train, LossMode, Profile, TrainConfig};
use cubefield::volume::{read_volume, resample_trilinear, Volume};

use crate::config::{self, parse, Overrides};
use crate::manifest::{hash_volume, write_json_atomic, RunManifest};
use crate::usage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Cells {
    /// Baseline, +CuS, +CuS+IVR, +all.
    Table3,
    /// All eight sampler x renderer x loss combinations.
    All,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// LR volume to train on.
    #[arg(long)]
    pub input: PathBuf,
    /// HR volume to score against; also fixes the output grid.
    #[arg(long)]
    pub reference: PathBuf,
    /// Output table (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse::<Profile>)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Component cells; defaults to `table3` when no grid is given.
    #[arg(long, value_enum)]
    pub cells: Option<Cells>,
    /// Sweep of the full model, e.g. `--grid l=0.5,1,2 --grid p=2,inf`.
    #[arg(long, value_name = "KEY=V1,V2,..")]
    pub grid: Vec<String>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub name: String,
    pub sampler: SamplerMode,
    pub renderer: RendererMode,
    pub loss: LossMode,
    pub edge_length: f64,
    pub norm: Norm,
}

#[derive(Serialize)]
struct Row {
    #[serde(flatten)]
    cell: Cell,
    metrics: MetricReport,
    final_loss: f64,
    train_seconds: f64,
}

#[derive(Serialize)]
struct Table<'a> {
    config: &'a TrainConfig,
    scale: [f64; 3],
    baseline: MetricReport,
    rows: Vec<Row>,
}

fn cell(name: &str, sampler: SamplerMode, renderer: RendererMode, loss: LossMode, base: &TrainConfig) -> Cell {
    Cell {
        name: name.into(),
        sampler,
        renderer,
        loss,
        edge_length: base.render.edge_length,
        norm: base.render.norm,
    }
}

pub fn component_cells(which: Cells, base: &TrainConfig) -> Vec<Cell> {
    use LossMode::{Adaptive, Nerf};
    use RendererMode::{Isotropic, Ray as RayR};
    use SamplerMode::{Cube, Ray as RayS};
    match which {
        Cells::Table3 => vec![
            cell("baseline", RayS, RayR, Nerf, base),
            cell("+CuS", Cube, RayR, Nerf, base),
            cell("+CuS+IVR", Cube, Isotropic, Nerf, base),
            cell("+all", Cube, Isotropic, Adaptive, base),
        ],
        Cells::All => {
            let mut out = Vec::new();
            for s in [RayS, Cube] {
                for r in [RayR, Isotropic] {
                    for l in [Nerf, Adaptive] {
                        let name = format!("{}/{}/{}", kebab(&s), kebab(&r), kebab(&l));
                        out.push(cell(&name, s, r, l, base));
                    }
                }
            }
            out
        }
    }
}

fn kebab(v: &impl Serialize) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

/// Full-model cells over the cross product of the `l` and `p` grids.
pub fn grid_cells(specs: &[String], base: &TrainConfig) -> anyhow::Result<Vec<Cell>> {
    let mut edges = vec![base.render.edge_length];
    let mut norms = vec![base.render.norm];
    for spec in specs {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("grid {spec:?} must look like l=0.5,1,2")))?;
        let values: Vec<&str> = values.split(',').map(str::trim).collect();
        match key {
            "l" => {
                edges = values
                    .iter()
                    .map(|v| v.parse::<f64>().ok().filter(|l| *l > 0.0))
                    .collect::<Option<_>>()
                    .ok_or_else(|| usage(format!("grid {spec:?}: edge lengths must be positive")))?
            }
            "p" => {
                norms = values
                    .iter()
                    .map(|v| v.parse::<Norm>())
                    .collect::<Result<_, _>>()?
            }
            other => return Err(usage(format!("unknown grid key {other:?} (expected l or p)"))),
        }
    }
    let mut out = Vec::new();
    for &l in &edges {
        for &p in &norms {
            let mut c = cell(
                &format!("l={l},p={p}"),
                SamplerMode::Cube,
                RendererMode::Isotropic,
                LossMode::Adaptive,
                base,
            );
            c.edge_length = l;
            c.norm = p;
            out.push(c);
        }
    }
    Ok(out)
}

fn run_cell(c: &Cell, base: &TrainConfig, lr: &Volume, hr: &Volume, factors: [f64; 3]) -> anyhow::Result<Row> {
    let mut cfg = base.clone();
    cfg.render.sampler = c.sampler;
    cfg.render.renderer = c.renderer;
    cfg.loss = c.loss;
    cfg.render.edge_length = c.edge_length;
    cfg.render.norm = c.norm;
    cfg.validate()?;
    let started = Instant::now();
    let state = train(lr, &cfg, &mut ())?;
    let train_seconds = started.elapsed().as_secs_f64();
    let sr = upsample_volume(&state.pair, &cfg.test_settings(), hr.dims(), cfg.seed)?;
    let metrics = MetricReport::evaluate(&c.name, factors, &sr, hr)?;
    info!(
        "{}: PSNR {:.3} dB, SSIM {:.4} ({train_seconds:.1} s)",
        c.name, metrics.psnr_db, metrics.ssim
    );
    Ok(Row {
        cell: c.clone(),
        metrics,
        final_loss: state.running_loss,
        train_seconds,
    })
}

pub fn run(a: Args, argv: &[String]) -> anyhow::Result<()> {
    let base = config::resolve(a.profile, a.config.as_deref(), &a.overrides)?;
    let lr = read_volume(&a.input)?;
    let hr = read_volume(&a.reference)?;
    let factors = [0, 1, 2].map(|i| hr.dims()[i] as f64 / lr.dims()[i] as f64);
    let mut cells = match (a.cells, a.grid.is_empty()) {
        (Some(c), _) => component_cells(c, &base),
        (None, true) => component_cells(Cells::Table3, &base),
        (None, false) => Vec::new(),
    };
    if !a.grid.is_empty() {
        cells.extend(grid_cells(&a.grid, &base)?);
    }
    let mut manifest = RunManifest::new("ablate", argv, base.seed, &base)?;
    manifest.inputs = vec![hash_volume(&a.input)?, hash_volume(&a.reference)?];

    let trilinear = resample_trilinear(&lr, hr.dims())?;
    let baseline = MetricReport::evaluate("trilinear", factors, &trilinear, &hr)?;
    info!("trilinear: PSNR {:.3} dB", baseline.psnr_db);
    let rows = cells
        .iter()
        .map(|c| run_cell(c, &base, &lr, &hr, factors))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let table = Table {
        config: &base,
        scale: factors,
        baseline,
        rows,
    };
    write_json_atomic(&a.out, &table)?;
    manifest.finish("ok");
    let mut mpath = a.out.as_os_str().to_owned();
    mpath.push(".manifest.json");
    manifest.write(&PathBuf::from(mpath))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table3_rows() {
        let base = TrainConfig::desk();
        let rows = component_cells(Cells::Table3, &base);
        let names: Vec<&str> = rows.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["baseline", "+CuS", "+CuS+IVR", "+all"]);
        assert_eq!(rows[0].sampler, SamplerMode::Ray);
        assert_eq!(rows[3].loss, LossMode::Adaptive);
        assert_eq!(component_cells(Cells::All, &base).len(), 8);
        assert_eq!(component_cells(Cells::All, &base)[0].name, "ray/ray/nerf");
    }

    #[test]
    fn grids_cross() {
        let base = TrainConfig::desk();
        let g = |s: &[&str]| grid_cells(&s.iter().map(|v| v.to_string()).collect::<Vec<_>>(), &base);
        assert_eq!(g(&["l=0.5,1,2"]).unwrap().len(), 3);
        let both = g(&["l=0.5,2", "p=2,inf"]).unwrap();
        assert_eq!(both.len(), 4);
        assert_eq!(both[1].norm, Norm::LInf);
        assert_eq!(both[1].edge_length, 0.5);
        assert!(g(&["l=0"]).is_err());
        assert!(g(&["q=1"]).is_err());
        assert!(g(&["p=3"]).is_err());
    }
}
