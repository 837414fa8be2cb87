//! Command-line experiment runner for federated spiking circuit training.

pub mod config;
pub mod experiments;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{resolve, ExperimentConfig, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] flqdsnn_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for bad settings, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_)
            | CliError::Core(flqdsnn_core::Error::Config(_) | flqdsnn_core::Error::Usage(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "flqdsnn", version, about = "Federated spiking variational-circuit experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train once per seed and log every round
    Train(RunArgs),
    /// Final accuracy across client counts
    SweepClients(RunArgs),
    /// Final accuracy across fixed thresholds
    SweepThreshold(RunArgs),
    /// Paired runs with spiking on and off
    Ablation(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Flat TOML file using the long flag names as keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: Overrides,
}

impl RunArgs {
    pub fn resolve(&self, env_seed: Option<&str>) -> Result<ExperimentConfig, CliError> {
        let file = self.config.as_deref().map(Overrides::from_file).transpose()?;
        resolve(file.as_ref(), &self.flags, env_seed)
    }
}

/// Runs a parsed command and returns the files it wrote.
pub fn run(cli: &Cli, env_seed: Option<&str>) -> Result<Vec<PathBuf>, CliError> {
    match &cli.command {
        Command::Train(a) => experiments::run_train(&a.resolve(env_seed)?),
        Command::SweepClients(a) => experiments::run_sweep_clients(&a.resolve(env_seed)?),
        Command::SweepThreshold(a) => experiments::run_sweep_threshold(&a.resolve(env_seed)?),
        Command::Ablation(a) => experiments::run_ablation(&a.resolve(env_seed)?),
    }
}
