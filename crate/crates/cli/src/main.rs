//! `cubefield` command-line front end.

mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cubefield::Error;

/// Exit status for usage errors, missing files and invalid flags.
const EXIT_USAGE: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "cubefield", version, about = "Zero-shot volumetric super-resolution")]
struct Cli {
    /// Worker threads. `--threads 1` makes every output bit-reproducible.
    #[arg(long, global = true, env = "CUBEFIELD_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an analytic HR phantom and its nearest-neighbor LR version.
    Phantom(commands::phantom::Args),
    /// Fit the coarse and fine fields to one volume.
    Train(commands::train::Args),
    /// Render the trained field on a denser grid.
    Upsample(commands::upsample::Args),
    /// Render arbitrary oblique slices as 16-bit PGM images.
    Render(commands::render::Args),
    /// Train and evaluate sampler/renderer/loss variants.
    Ablate(commands::ablate::Args),
}

/// A flag combination the library cannot see, reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 1;
    };
    match e {
        Error::Divergence { .. } | Error::NonFinite(_) => EXIT_DIVERGED,
        e if e.is_format() => EXIT_FORMAT,
        e if e.is_not_found() => EXIT_USAGE,
        Error::Config(_) | Error::InvalidAxis(_) | Error::InvalidFactor(_) | Error::InvalidInput(_) => {
            EXIT_USAGE
        }
        _ => 1,
    }
}

/// The error chain joined by `: `, skipping causes whose text the previous
/// message already ends with.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("cannot configure thread pool: {e}"))?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads(cli.threads)?;
    let argv: Vec<String> = std::env::args().collect();
    match cli.command {
        Command::Phantom(a) => commands::phantom::run(a, &argv),
        Command::Train(a) => commands::train::run(a, &argv),
        Command::Upsample(a) => commands::upsample::run(a, &argv),
        Command::Render(a) => commands::render::run(a, &argv),
        Command::Ablate(a) => commands::ablate::run(a, &argv),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
