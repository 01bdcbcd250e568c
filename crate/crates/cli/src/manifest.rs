//! Run manifests: enough to repeat a command (resolved config, seed, input
//! hashes) plus bookkeeping about the run itself.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use cubefield::volume::{raw_paths, VolumeFormat};

pub fn tool_version() -> String {
    let mut s = format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    if let Some(rev) = option_env!("CUBEFIELD_GIT_REV") {
        s.push_str(&format!(" ({rev})"));
    }
    s
}

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn hash_file(path: &Path) -> anyhow::Result<FileRecord> {
    hash_parts(path, &[path.to_path_buf()])
}

/// Like [`hash_file`], but a raw volume hashes its sample file followed by
/// the sidecar.
pub fn hash_volume(path: &Path) -> anyhow::Result<FileRecord> {
    match VolumeFormat::from_path(path) {
        Ok(VolumeFormat::Raw) => {
            let (data, sidecar) = raw_paths(path);
            hash_parts(path, &[data, sidecar])
        }
        _ => hash_file(path),
    }
}

fn hash_parts(path: &Path, files: &[PathBuf]) -> anyhow::Result<FileRecord> {
    let mut h = Sha256::new();
    for f in files {
        let bytes = fs::read(f).map_err(|e| cubefield::Error::Path {
            path: f.clone(),
            source: e,
        })?;
        h.update(&bytes);
    }
    Ok(FileRecord {
        path: path.to_path_buf(),
        sha256: hex::encode(h.finalize()),
    })
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// Checkpoint produced or consumed by the run.
    pub checkpoint: Option<PathBuf>,
    pub started_unix_s: u64,
    /// Unset while the run is in progress.
    pub wall_clock_s: Option<f64>,
    pub status: String,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String], seed: u64, config: impl Serialize) -> anyhow::Result<Self> {
        Ok(Self {
            tool: tool_version(),
            command: command.to_string(),
            argv: argv.to_vec(),
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            checkpoint: None,
            started_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_clock_s: None,
            status: "running".into(),
            started: Some(Instant::now()),
        })
    }

    pub fn finish(&mut self, status: &str) {
        self.status = status.to_string();
        self.wall_clock_s = self.started.map(|t| t.elapsed().as_secs_f64());
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        write_json_atomic(path, self)
    }
}

/// Pretty JSON through a temporary file and rename.
pub fn write_json_atomic(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.nii");
        fs::write(&p, b"abc").unwrap();
        assert_eq!(
            hash_file(&p).unwrap().sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let mut m = RunManifest::new("test", &[], 3, serde_json::json!({"a": 1})).unwrap();
        m.write(&p).unwrap();
        m.finish("ok");
        m.write(&p).unwrap();
        let back: serde_json::Value = serde_json::from_slice(&fs::read(&p).unwrap()).unwrap();
        assert_eq!(back["status"], "ok");
        assert_eq!(back["seed"], 3);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
