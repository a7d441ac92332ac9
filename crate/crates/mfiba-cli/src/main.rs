//! `mfiba`: multiscale feature compression driven by task importance.
//!
//! Offline: `synth` a corpus, `calibrate` the loss-rate and rate-quality
//! models. Online: `weights`, `allocate`, `encode`, `decode`. Measurement:
//! `evaluate`, `bdrate`, `sweep`.

mod commands;
mod config;
mod meta;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "mfiba",
    version,
    about = "Multiscale feature compression: importance probing, bit allocation, coding, evaluation"
)]
struct Cli {
    /// JSON run-configuration file; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Base RNG seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker-thread cap for corpus-parallel commands.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file or directory (meaning depends on the subcommand).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a deterministic corpus of feature pyramids
    Synth(commands::synth::SynthArgs),
    /// Fit loss-rate and rate-quality models from a pyramid corpus
    Calibrate(commands::calibrate::CalibrateArgs),
    /// Predict (and optionally refine) per-scale importance weights
    Weights(commands::weights::WeightsArgs),
    /// Solve the bit allocation for a rate target
    Allocate(commands::allocate::AllocateArgs),
    /// Encode a pyramid into a coded stream with a metadata sidecar
    Encode(commands::encode::EncodeArgs),
    /// Decode a coded stream back into a pyramid
    Decode(commands::decode::DecodeArgs),
    /// Measure rate-accuracy: ladder sweeps or one coded pair
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Average rate difference between two rate-accuracy curve files
    Bdrate(commands::bdrate::BdrateArgs),
    /// Diagnostic tables: per-scale quality ladders, weight vs object size
    Sweep(commands::sweep::SweepArgs),
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_flags(cli.seed);
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Synth(args) => commands::synth::run(&cfg, out, args),
        Command::Calibrate(args) => commands::calibrate::run(&cfg, out, args),
        Command::Weights(args) => commands::weights::run(&cfg, out, args),
        Command::Allocate(args) => commands::allocate::run(&cfg, out, args),
        Command::Encode(args) => commands::encode::run(&cfg, out, args),
        Command::Decode(args) => commands::decode::run(&cfg, out, args),
        Command::Evaluate(args) => commands::evaluate::run(&cfg, out, args),
        Command::Bdrate(args) => commands::bdrate::run(&cfg, out, args),
        Command::Sweep(args) => commands::sweep::run(&cfg, out, args),
    }
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
