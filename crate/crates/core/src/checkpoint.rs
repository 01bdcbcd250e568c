//! Binary checkpoints of a training state.
//!
//! Layout (little endian):
//!
//! ```text
//! "CUBF" | u32 version | u32 header_len | header JSON
//! coarse params | fine params            (per layer: weight row-major, bias; f32)
//! [optimizer: per field u64 step, first moments, second moments]
//! u32 CRC-32 of everything above
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{AdamState, Dense, FieldModel, Gradients};
use crate::rendering::FieldPair;
use crate::training::{TrainConfig, TrainState};
use crate::volume::NormalizationMap;

pub const MAGIC: &[u8; 4] = b"CUBF";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub dims: [usize; 3],
    pub padding: f64,
    pub step: u64,
    pub running_loss: f64,
    pub has_optimizer: bool,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn new(state: &TrainState, config: &TrainConfig) -> Self {
        Self {
            header: CheckpointHeader {
                dims: state.pair.map.dims,
                padding: state.pair.map.padding,
                step: state.step,
                running_loss: state.running_loss,
                has_optimizer: true,
                config: config.clone(),
            },
            state: state.clone(),
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.header.config
    }
}

fn put_layers(out: &mut Vec<u8>, layers: &[Dense<f32>]) {
    for layer in layers {
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&ckpt.header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let s = &ckpt.state;
    put_layers(&mut out, s.pair.coarse.layers());
    put_layers(&mut out, s.pair.fine.layers());
    if ckpt.header.has_optimizer {
        for adam in [&s.adam_coarse, &s.adam_fine] {
            out.extend_from_slice(&adam.step_count().to_le_bytes());
            put_layers(&mut out, &adam.first.layers);
            put_layers(&mut out, &adam.second.layers);
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(what, "truncated checkpoint")),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    /// Fills layers shaped like `template` with stored values.
    fn layers(&mut self, template: &[Dense<f32>], what: &str) -> Result<Vec<Dense<f32>>> {
        let mut out = template.to_vec();
        for layer in &mut out {
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v = f32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes"));
            }
        }
        Ok(out)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 {
        return Err(Error::format("header", "truncated checkpoint"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format("magic", "not a checkpoint file"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::format("crc32", "checksum mismatch, file is corrupt"));
    }
    let mut c = Cursor { bytes: body, pos: 4 };
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::format(
            "version",
            format!("checkpoint version {version}, this build reads {VERSION}"),
        ));
    }
    let len = c.u32("header")? as usize;
    let header: CheckpointHeader = serde_json::from_slice(c.take(len, "header")?)
        .map_err(|e| Error::format("header", e.to_string()))?;
    let cfg = &header.config;
    cfg.validate()?;
    let template: FieldModel<f32> = FieldModel::zeros(cfg.encoder, cfg.mlp.clone())?;
    let model = |c: &mut Cursor, what: &str| -> Result<FieldModel<f32>> {
        FieldModel::from_layers(cfg.encoder, cfg.mlp.clone(), c.layers(template.layers(), what)?)
    };
    let coarse = model(&mut c, "coarse")?;
    let fine = model(&mut c, "fine")?;
    let (adam_coarse, adam_fine) = if header.has_optimizer {
        let adam = |c: &mut Cursor, what: &str| -> Result<AdamState<f32>> {
            let step = c.u64(what)?;
            let first = Gradients {
                layers: c.layers(template.layers(), what)?,
            };
            let second = Gradients {
                layers: c.layers(template.layers(), what)?,
            };
            Ok(AdamState::from_parts(cfg.adam, first, second, step))
        };
        (adam(&mut c, "adam")?, adam(&mut c, "adam")?)
    } else {
        (AdamState::new(&coarse, cfg.adam), AdamState::new(&fine, cfg.adam))
    };
    if c.pos != body.len() {
        return Err(Error::format("data", format!("{} trailing bytes", body.len() - c.pos)));
    }
    let state = TrainState {
        pair: FieldPair {
            coarse,
            fine,
            map: NormalizationMap::new(header.dims, header.padding),
        },
        adam_coarse,
        adam_fine,
        step: header.step,
        running_loss: header.running_loss,
    };
    Ok(Checkpoint { header, state })
}

/// Writes through a temporary file and renames, so readers never see a
/// partial checkpoint.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::at_path(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::at_path(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::at_path(path, e))?;
    decode_checkpoint(&bytes)
}
