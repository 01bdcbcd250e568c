use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;

use cubefield::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use cubefield::training::{train_from, LogLine, Profile, TrainConfig, TrainObserver, TrainState};
use cubefield::volume::read_volume;
use cubefield::{Error, Result};

use super::create_dir;
use crate::config::{self, parse, Overrides};
use crate::manifest::{hash_file, hash_volume, RunManifest};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Volume to fit (`.nii`, or raw `.f32`/`.json`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = parse::<Profile>)]
    pub profile: Option<Profile>,
    /// TOML file with configuration fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

struct Recorder {
    log: BufWriter<File>,
    dir: PathBuf,
    cfg: TrainConfig,
}

impl Recorder {
    fn prune(&self) -> Result<()> {
        let mut saved: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "ckpt"))
            .collect();
        saved.sort();
        let excess = saved.len().saturating_sub(self.cfg.keep_checkpoints);
        for p in &saved[..excess] {
            fs::remove_file(p).map_err(|e| Error::Path {
                path: p.clone(),
                source: e,
            })?;
        }
        Ok(())
    }
}

impl TrainObserver for Recorder {
    fn on_log(&mut self, line: &LogLine) {
        info!(
            "step {} lr {:.3e} coarse {:.4e} fine {:.4e}",
            line.step, line.lr, line.loss_coarse, line.loss_fine
        );
        // A failed log write must not abort a long run.
        let _ = writeln!(self.log, "{}", line.to_tsv()).and_then(|_| self.log.flush());
    }

    fn on_checkpoint(&mut self, state: &TrainState) -> Result<()> {
        let path = self.dir.join(format!("step-{:08}.ckpt", state.step));
        save_checkpoint(&path, &Checkpoint::new(state, &self.cfg))?;
        self.prune()
    }
}

pub fn checkpoint_path(out: &Path) -> PathBuf {
    out.join("model.ckpt")
}

pub fn run(a: Args, argv: &[String]) -> anyhow::Result<()> {
    let volume = read_volume(&a.input)?;
    let (cfg, state) = match &a.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let mut cfg = ckpt.header.config.clone();
            a.overrides.apply(&mut cfg);
            cfg.validate()?;
            (cfg, ckpt.state)
        }
        None => {
            let cfg = config::resolve(a.profile, a.config.as_deref(), &a.overrides)?;
            let state = TrainState::init(volume.dims(), &cfg)?;
            (cfg, state)
        }
    };
    create_dir(&a.out)?;
    let ckpt_dir = a.out.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let manifest_path = a.out.join("manifest.json");
    let mut manifest = RunManifest::new("train", argv, cfg.seed, &cfg)?;
    manifest.inputs.push(hash_volume(&a.input)?);
    if let Some(r) = &a.resume {
        manifest.inputs.push(hash_file(r)?);
    }
    let model = checkpoint_path(&a.out);
    manifest.checkpoint = Some(model.clone());
    manifest.write(&manifest_path)?;
    fs::write(a.out.join("config.toml"), config::to_toml(&cfg)?)?;

    let log_path = a.out.join("train.log");
    let mut log = BufWriter::new(File::create(&log_path)?);
    writeln!(log, "step\tlr\tloss_coarse\tloss_fine\twall_ms")?;
    let mut recorder = Recorder {
        log,
        dir: ckpt_dir,
        cfg: cfg.clone(),
    };
    info!(
        "training {:?} for {} iterations (batch {}, seed {})",
        volume.dims(),
        cfg.max_iters,
        cfg.batch_size,
        cfg.seed
    );
    let result = train_from(state, &volume, &cfg, &mut recorder);
    let state = match result {
        Ok(s) => s,
        Err(e) => {
            manifest.finish(match e {
                Error::Divergence { .. } => "diverged",
                _ => "failed",
            });
            manifest.write(&manifest_path)?;
            return Err(e.into());
        }
    };
    save_checkpoint(&model, &Checkpoint::new(&state, &cfg))?;
    info!("final running loss {:.4e}, wrote {}", state.running_loss, model.display());
    manifest.outputs = vec![hash_file(&model)?, hash_file(&log_path)?];
    manifest.finish("ok");
    manifest.write(&manifest_path)
}
