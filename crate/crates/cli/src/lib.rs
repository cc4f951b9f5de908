//! Command-line driver for the culture-bridge pipeline.

pub mod commands;
pub mod config;
pub mod digest;
pub mod error;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{FlagOverrides, InputFormat, Mode, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "culture-bridge",
    version,
    about = "Cross-cultural driving-behavior transfer pipeline"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set training.epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub sets: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long = "out", global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads for rollouts and gradient accumulation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Share of tracks (ingest) or windows (train, calibrate) to keep.
    #[arg(long, global = true)]
    pub fraction: Option<f64>,
    #[arg(long, value_enum, global = true)]
    pub mode: Option<Mode>,
    /// Refine actions by generalized policy improvement.
    #[arg(long, global = true)]
    pub gpi: bool,
    /// Feed recorded states at every step instead of closing the loop.
    #[arg(long, global = true)]
    pub teacher_forced: bool,
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub candidate: Option<PathBuf>,
    /// Culture spec JSON for `synth`, replacing the preset.
    #[arg(long, global = true)]
    pub culture: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<InputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic world from a culture spec.
    Synth,
    /// Normalize a raw dataset to canonical CSV.
    Ingest,
    /// Train an archetype with the culture vector fixed at all-ones.
    Train,
    /// Re-estimate the culture vector of a model on target data.
    Calibrate,
    /// Roll a model out on every ego track of a dataset.
    Rollout,
    /// Compare a candidate against reference data and write a report.
    Evaluate,
}

impl GlobalArgs {
    fn overrides(&self) -> FlagOverrides {
        FlagOverrides {
            seed: self.seed,
            output: self.output.clone(),
            jobs: self.jobs,
            fraction: self.fraction,
            mode: self.mode,
            gpi: self.gpi,
            teacher_forced: self.teacher_forced,
            data: self.data.clone(),
            model: self.model.clone(),
            candidate: self.candidate.clone(),
            culture: self.culture.clone(),
            format: self.format,
        }
    }
}

/// Resolves the configuration and runs one subcommand.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.global.config.as_deref(), &cli.global.sets, &cli.global.overrides())?;
    match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("jobs: {e}")))?
            .install(|| dispatch(cli.command, &cfg)),
        None => dispatch(cli.command, &cfg),
    }
}

pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Synth => commands::synth(cfg).map(drop),
        Command::Ingest => commands::ingest(cfg).map(drop),
        Command::Train => commands::train(cfg).map(drop),
        Command::Calibrate => commands::calibrate(cfg).map(drop),
        Command::Rollout => commands::rollout(cfg).map(drop),
        Command::Evaluate => commands::evaluate(cfg).map(drop),
    }
}
