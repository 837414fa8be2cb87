//! Experiment settings and their resolution order:
//! preset defaults, then the config file, then `FLQDSNN_SEED`, then flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use flqdsnn_core::circuit::{EncodingScale, SpikeMode};
use flqdsnn_core::fedcore::{BatchMode, FederationConfig, TauTick};

use crate::CliError;

pub const SEED_ENV: &str = "FLQDSNN_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 5 clients, 20 local iterations, 30 rounds.
    Desk,
    /// 20 clients, 100 local iterations, 100 rounds.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpikeModeArg {
    Final,
    PerLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TickArg {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingArg {
    /// RY(π·x)
    Pi,
    /// RY(x)
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchArg {
    Full,
    PerSample,
}

/// Fully resolved settings. Serialized verbatim into every summary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub dataset: String,
    pub label_column: String,
    pub n_classes: Option<usize>,
    pub test_fraction: f64,
    pub features: usize,
    pub clients: usize,
    pub rounds: usize,
    pub local_iters: usize,
    pub lr: f64,
    pub alpha: f64,
    pub seed: u64,
    pub seeds: usize,
    pub tau_init: f64,
    pub tau_inc: f64,
    pub tau_max: f64,
    pub tau_fixed: Option<f64>,
    pub tau_tick: TickArg,
    pub spiking: Switch,
    pub spike_mode: SpikeModeArg,
    pub layers: usize,
    pub encoding: EncodingArg,
    pub batch: BatchArg,
    pub client_list: Vec<usize>,
    pub tau_list: Vec<f64>,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let (clients, local_iters, rounds) = match preset {
            Preset::Desk => (5, 20, 30),
            Preset::Paper => (20, 100, 100),
        };
        Self {
            preset,
            dataset: "iris".into(),
            label_column: "label".into(),
            n_classes: None,
            test_fraction: 0.2,
            features: 4,
            clients,
            rounds,
            local_iters,
            lr: 0.05,
            alpha: 0.5,
            seed: 0,
            seeds: 1,
            tau_init: 0.0,
            tau_inc: 0.05,
            tau_max: 1.0,
            tau_fixed: None,
            tau_tick: TickArg::Global,
            spiking: Switch::On,
            spike_mode: SpikeModeArg::Final,
            layers: 5,
            encoding: EncodingArg::Pi,
            batch: BatchArg::Full,
            client_list: vec![5, 10, 15, 20, 25],
            tau_list: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            out: PathBuf::from("results"),
        }
    }

    /// Seeds of the repeated runs: `seed, seed + 1, …`.
    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// The federation settings for one run.
    pub fn federation(&self, seed: u64) -> FederationConfig {
        FederationConfig {
            n_clients: self.clients,
            local_iters: self.local_iters,
            global_rounds: self.rounds,
            learning_rate: self.lr,
            dirichlet_alpha: self.alpha,
            seed,
            tau_initial: self.tau_init,
            tau_increment: self.tau_inc,
            tau_max: self.tau_max,
            tau_fixed: self.tau_fixed,
            tau_tick: match self.tau_tick {
                TickArg::Global => TauTick::Global,
                TickArg::Local => TauTick::Local,
            },
            spiking_enabled: self.spiking == Switch::On,
            spiking_mode: match self.spike_mode {
                SpikeModeArg::Final => SpikeMode::FinalLayer,
                SpikeModeArg::PerLayer => SpikeMode::PerLayer,
            },
            n_layers: self.layers,
            encoding: match self.encoding {
                EncodingArg::Pi => EncodingScale::Pi,
                EncodingArg::One => EncodingScale::One,
            },
            batch_mode: match self.batch {
                BatchArg::Full => BatchMode::Full,
                BatchArg::PerSample => BatchMode::PerSample,
            },
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds == 0 {
            return Err(CliError::Config("seeds must be at least 1".into()));
        }
        if self.client_list.is_empty() || self.client_list.contains(&0) {
            return Err(CliError::Config("client-list needs positive entries".into()));
        }
        if self.tau_list.is_empty() {
            return Err(CliError::Config("tau-list must not be empty".into()));
        }
        if let Some(t) = self.tau_list.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(CliError::Config(format!("threshold {t} outside [0, 1]")));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "test-fraction {} must lie strictly between 0 and 1",
                self.test_fraction
            )));
        }
        self.federation(self.seed).validate()?;
        Ok(())
    }
}

/// Optional values from either the config file or the command line. Keys
/// match the long flag names.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Overrides {
    /// iris, digits, breast_cancer or csv:<path>
    #[arg(long)]
    pub dataset: Option<String>,
    /// Label column for csv datasets
    #[arg(long)]
    pub label_column: Option<String>,
    /// Class count for csv datasets
    #[arg(long)]
    pub n_classes: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Circuit width; wider data is reduced by PCA
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub local_iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Dirichlet concentration of the client partition
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Base seed; runs use seed, seed+1, …
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of repeated runs
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub tau_init: Option<f64>,
    #[arg(long)]
    pub tau_inc: Option<f64>,
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// Constant threshold; disables the schedule
    #[arg(long)]
    pub tau_fixed: Option<f64>,
    #[arg(long, value_enum)]
    pub tau_tick: Option<TickArg>,
    #[arg(long, value_enum)]
    pub spiking: Option<Switch>,
    #[arg(long, value_enum)]
    pub spike_mode: Option<SpikeModeArg>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long, value_enum)]
    pub encoding: Option<EncodingArg>,
    #[arg(long, value_enum)]
    pub batch: Option<BatchArg>,
    /// Client counts for sweep-clients
    #[arg(long, value_delimiter = ',')]
    pub client_list: Option<Vec<usize>>,
    /// Thresholds for sweep-threshold
    #[arg(long, value_delimiter = ',')]
    pub tau_list: Option<Vec<f64>>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

macro_rules! overlay {
    ($cfg:ident, $o:ident; $($field:ident),*) => {
        $( if let Some(v) = $o.$field.clone() { $cfg.$field = v; } )*
    };
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    fn apply(&self, cfg: &mut ExperimentConfig) {
        overlay!(cfg, self; dataset, label_column, test_fraction, features, clients, rounds,
            local_iters, lr, alpha, seed, seeds, tau_init, tau_inc, tau_max, tau_tick, spiking,
            spike_mode, layers, encoding, batch, client_list, tau_list, out);
        if self.n_classes.is_some() {
            cfg.n_classes = self.n_classes;
        }
        if self.tau_fixed.is_some() {
            cfg.tau_fixed = self.tau_fixed;
        }
    }
}

/// Builds the final settings. `env_seed` is the raw `FLQDSNN_SEED` value.
pub fn resolve(
    file: Option<&Overrides>,
    flags: &Overrides,
    env_seed: Option<&str>,
) -> Result<ExperimentConfig, CliError> {
    let preset = flags
        .preset
        .or(file.and_then(|f| f.preset))
        .unwrap_or(Preset::Desk);
    let mut cfg = ExperimentConfig::preset(preset);
    if let Some(f) = file {
        f.apply(&mut cfg);
    }
    if let Some(raw) = env_seed {
        cfg.seed = raw.trim().parse().map_err(|_| {
            CliError::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer"))
        })?;
    }
    flags.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}
