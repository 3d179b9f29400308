//! Command-line front end: config-driven sweeps, controlled experiments,
//! mitigation grids, diagnostics, and plot-ready exports.
//!
//! Exit codes: 0 success, 1 usage/config/runtime error, 2 a checked
//! property failed (bound violation or fit outside its window). Every run
//! writes `manifest.json` into its output directory — also on failure — and
//! all other artifacts are byte-identical across reruns with the same
//! config and seed.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::Outcome;
use config::Config;
use manifest::{RunContext, RunStatus};

#[derive(Debug, Parser)]
#[command(
    name = "rftlab",
    version,
    about = "Reward-finetuning stall laboratory: bound sweeps, crossing-time dynamics, and controlled experiments"
)]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true, env = "RFTLAB_CONFIG")]
    config: Option<PathBuf>,
    /// Parent output directory (overrides the config).
    #[arg(long, global = true, env = "RFTLAB_OUT")]
    out: Option<PathBuf>,
    /// Base RNG seed (overrides the config).
    #[arg(long, global = true, env = "RFTLAB_SEED")]
    seed: Option<u64>,
    /// Worker threads for sweeps; 0 keeps the library default.
    #[arg(long, global = true, env = "RFTLAB_JOBS", default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Check every gradient-norm inequality on randomized instances.
    VerifyBounds,
    /// Crossing-time separation sweep with closed-form cross-checks.
    Gradflow,
    /// Pretrain on label sets, then finetune by reward and/or supervision.
    Controlled,
    /// Partial supervised phases ahead of reward finetuning, on a grid.
    Mitigate,
    /// Per-input reward statistics, percentiles, and correlations.
    Diagnose,
    /// Split training traces into per-metric plot panels.
    PlotData,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::VerifyBounds => "verify-bounds",
            Command::Gradflow => "gradflow",
            Command::Controlled => "controlled",
            Command::Mitigate => "mitigate",
            Command::Diagnose => "diagnose",
            Command::PlotData => "plot-data",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(error) => {
            // clap distinguishes help/version from real usage errors.
            if error.use_stderr() {
                eprint!("{error}");
                return ExitCode::from(1);
            }
            print!("{error}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::GateFailed(reason)) => {
            eprintln!("rftlab: gate failed: {reason}");
            ExitCode::from(2)
        }
        Err(error) => {
            eprintln!("rftlab: error: {error:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .context("configuring worker pool")?;
    }

    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        config.out = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let digest = config.digest()?;

    let out_dir = config.out.join(cli.command.name());
    let mut ctx = RunContext::new(cli.command.name(), out_dir, config.seed, digest)?;
    let result = dispatch(cli.command, &config, &mut ctx);
    match &result {
        Ok(Outcome::Clean) => ctx.finish(RunStatus::Ok)?,
        Ok(Outcome::GateFailed(reason)) => ctx.finish(RunStatus::GateFailed(reason.clone()))?,
        Err(error) => ctx.finish(RunStatus::Failed(format!("{error:#}")))?,
    }
    result
}

fn dispatch(command: Command, config: &Config, ctx: &mut RunContext) -> Result<Outcome> {
    match command {
        Command::VerifyBounds => commands::verify_bounds::run(config, ctx),
        Command::Gradflow => commands::gradflow::run(config, ctx),
        Command::Controlled => commands::controlled::run(config, ctx),
        Command::Mitigate => commands::mitigate::run(config, ctx),
        Command::Diagnose => commands::diagnose::run(config, ctx),
        Command::PlotData => commands::plot_data::run(config, ctx),
    }
}
