#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cubefield"));
    c.env("RUST_LOG", "warn").env_remove("CUBEFIELD_THREADS");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn cubefield")
}

pub fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "cubefield {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// A tiny configuration that trains a 16^3 volume in a second or two.
pub const TINY: &str = "\
profile = \"desk\"
batch_size = 32
max_iters = 40
log_every = 10
checkpoint_every = 10
test_coarse = 8
test_fine = 8
[render]
n_coarse = 8
n_fine = 8
[encoder]
num_frequencies = 3
[mlp]
width = 16
depth = 2
";

pub fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    fs::write(&p, TINY).unwrap();
    p
}

/// Phantom pair in `dir/ph`: 16^3 HR and 8^3 LR.
pub fn phantom(dir: &Path, seed: u64) -> PathBuf {
    let out = dir.join("ph");
    ok(&[
        "phantom", "--kind", "gaussian-blobs", "--dims", "16", "--scale", "2", "--seed",
        &seed.to_string(), "--out-dir", s(&out),
    ]);
    out
}
