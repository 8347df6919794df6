//! `subflow`: flows, variation checks and stability analysis from a config file.
//!
//! Exit codes: 0 success, 1 assertion failed (or flow hit its step budget),
//! 2 configuration or input error, 3 numerical blowup, 4 precondition violated.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use subflow_core::Error;

use crate::commands::{cmd_check, cmd_flow, cmd_leung, cmd_stability, output_dir, Status};
use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "subflow", version, about = "Subelliptic harmonic maps with potential on periodic grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Map dump produced by `flow` (stability, leung).
    #[arg(long, global = true)]
    field: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Variation residuals under grid refinement.
    Check,
    /// Geodesic gradient flow of the energy.
    Flow,
    /// Instability certificate, probes and Rayleigh search for a dumped map.
    Stability,
    /// Conformal-field index identities for a dumped map into a sphere.
    Leung,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericalBlowup { .. } => 3,
        Error::Precondition(_) | Error::Domain(_) => 4,
        _ => 2,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("SUBFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("SUBFLOW_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<Status, Error> {
    configure_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = output_dir(&cfg, cli.out);
    std::fs::create_dir_all(&out)?;
    match cli.command {
        Command::Check => cmd_check(&cfg, &out),
        Command::Flow => cmd_flow(&cfg, &out),
        Command::Stability => cmd_stability(&cfg, cli.field.as_deref(), &out),
        Command::Leung => cmd_leung(&cfg, cli.field.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
