//! The four experiment kinds. Each writes tidy CSV plus one JSON summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use flqdsnn_core::circuit::Circuit;
use flqdsnn_core::datasets::{
    load_builtin_breast_cancer, load_builtin_digits, load_builtin_iris, load_csv, prepare, Dataset,
};
use flqdsnn_core::fedcore::{predict_probs, train_federated, FederationConfig, RoundLog};
use flqdsnn_core::metrics::evaluate;

use crate::config::ExperimentConfig;
use crate::CliError;

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    match cfg.dataset.as_str() {
        "iris" => Ok(load_builtin_iris()),
        "digits" => Ok(load_builtin_digits()),
        "breast_cancer" => Ok(load_builtin_breast_cancer()),
        other => match other.strip_prefix("csv:") {
            Some(path) => {
                let n_classes = cfg.n_classes.ok_or_else(|| {
                    CliError::Config("csv datasets need n-classes".into())
                })?;
                Ok(load_csv(path, &cfg.label_column, n_classes)?)
            }
            None => Err(CliError::Config(format!(
                "unknown dataset {other:?}; expected iris, digits, breast_cancer or csv:<path>"
            ))),
        },
    }
}

/// Outcome of one seeded training run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub partition_hash: String,
    pub final_tau: f64,
    pub final_accuracy: f64,
    pub report: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logs: Option<Vec<RoundLog>>,
}

/// Prepares the data for `fed.seed`, trains, and scores the final model on
/// the held-out split with the final threshold.
pub fn run_once(data: &Dataset, cfg: &ExperimentConfig, fed: &FederationConfig) -> Result<RunRecord, CliError> {
    let prepared = prepare(data, cfg.test_fraction, fed.seed, cfg.features)?;
    let outcome = train_federated(&prepared.train, &prepared.test, fed)?;
    let circuit = Circuit::new(prepared.test.n_classes).with_encoding(fed.encoding);
    let probs = predict_probs(&circuit, &prepared.test, &outcome.params, &fed.spike_config(outcome.final_tau))?;
    let report = evaluate(&probs, &prepared.test.labels)?;
    Ok(RunRecord {
        seed: fed.seed,
        partition_hash: format!("{:016x}", outcome.partition_fingerprint),
        final_tau: outcome.final_tau,
        final_accuracy: report.accuracy,
        report: report.to_flat_map(),
        logs: Some(outcome.logs),
    })
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

fn median_report(records: &[RunRecord]) -> BTreeMap<String, f64> {
    let mut keys: Vec<&String> = records.iter().flat_map(|r| r.report.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|k| {
            let vals: Vec<f64> = records.iter().filter_map(|r| r.report.get(k).copied()).collect();
            (k.clone(), median(&vals))
        })
        .collect()
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct RoundRow {
    round: usize,
    accuracy: f64,
    loss: f64,
    tau: f64,
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct TrainBody {
    runs: Vec<RunRecord>,
    median: BTreeMap<String, f64>,
}

/// One run per seed: `train_seed{seed}.csv` each, plus `summary.json`.
pub fn run_train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let data = load_dataset(cfg)?;
    prepare_out(&cfg.out)?;
    let mut written = Vec::new();
    let mut runs = Vec::new();
    for seed in cfg.run_seeds() {
        let record = run_once(&data, cfg, &cfg.federation(seed))?;
        let rows: Vec<RoundRow> = record
            .logs
            .iter()
            .flatten()
            .map(|l| RoundRow { round: l.round, accuracy: l.global_accuracy, loss: l.global_loss, tau: l.tau })
            .collect();
        let path = cfg.out.join(format!("train_seed{seed}.csv"));
        write_csv(&path, &rows)?;
        written.push(path);
        runs.push(record);
    }
    let median = median_report(&runs);
    let path = cfg.out.join("summary.json");
    write_json(&path, &Summary { experiment: "train", config: cfg, body: TrainBody { runs, median } })?;
    written.push(path);
    Ok(written)
}

#[derive(Serialize)]
struct ClientRow {
    clients: usize,
    seed: u64,
    final_accuracy: f64,
}

#[derive(Serialize)]
struct SweepPoint<K: Serialize> {
    value: K,
    median_accuracy: f64,
    runs: Vec<RunRecord>,
}

#[derive(Serialize)]
struct SweepBody<K: Serialize> {
    points: Vec<SweepPoint<K>>,
}

fn strip_logs(mut r: RunRecord) -> RunRecord {
    r.logs = None;
    r
}

/// One run per (client count, seed) into `sweep_clients.csv`.
pub fn run_sweep_clients(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let data = load_dataset(cfg)?;
    prepare_out(&cfg.out)?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &clients in &cfg.client_list {
        let mut runs = Vec::new();
        for seed in cfg.run_seeds() {
            let fed = FederationConfig { n_clients: clients, ..cfg.federation(seed) };
            let record = run_once(&data, cfg, &fed)?;
            rows.push(ClientRow { clients, seed, final_accuracy: record.final_accuracy });
            runs.push(strip_logs(record));
        }
        let accs: Vec<f64> = runs.iter().map(|r| r.final_accuracy).collect();
        points.push(SweepPoint { value: clients, median_accuracy: median(&accs), runs });
    }
    let csv_path = cfg.out.join("sweep_clients.csv");
    write_csv(&csv_path, &rows)?;
    let json_path = cfg.out.join("sweep_clients.json");
    write_json(&json_path, &Summary { experiment: "sweep-clients", config: cfg, body: SweepBody { points } })?;
    Ok(vec![csv_path, json_path])
}

#[derive(Serialize)]
struct TauRow {
    tau: f64,
    seed: u64,
    final_accuracy: f64,
}

/// One run per (fixed threshold, seed) into `sweep_threshold.csv`.
pub fn run_sweep_threshold(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let data = load_dataset(cfg)?;
    prepare_out(&cfg.out)?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &tau in &cfg.tau_list {
        let mut runs = Vec::new();
        for seed in cfg.run_seeds() {
            let fed = FederationConfig { tau_fixed: Some(tau), ..cfg.federation(seed) };
            let record = run_once(&data, cfg, &fed)?;
            rows.push(TauRow { tau, seed, final_accuracy: record.final_accuracy });
            runs.push(strip_logs(record));
        }
        let accs: Vec<f64> = runs.iter().map(|r| r.final_accuracy).collect();
        points.push(SweepPoint { value: tau, median_accuracy: median(&accs), runs });
    }
    let csv_path = cfg.out.join("sweep_threshold.csv");
    write_csv(&csv_path, &rows)?;
    let json_path = cfg.out.join("sweep_threshold.json");
    write_json(&json_path, &Summary { experiment: "sweep-threshold", config: cfg, body: SweepBody { points } })?;
    Ok(vec![csv_path, json_path])
}

#[derive(Serialize)]
struct ArmRow<'a> {
    seed: u64,
    arm: &'a str,
    final_accuracy: f64,
    partition_hash: &'a str,
}

#[derive(Serialize)]
struct Pair {
    seed: u64,
    partition_hash: String,
    on: RunRecord,
    off: RunRecord,
    gap: f64,
}

#[derive(Serialize)]
struct AblationBody {
    pairs: Vec<Pair>,
    median_on: f64,
    median_off: f64,
    median_gap: f64,
}

/// Paired spiking-on / spiking-off runs on identical seeds and shards.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let data = load_dataset(cfg)?;
    prepare_out(&cfg.out)?;
    let mut pairs = Vec::new();
    for seed in cfg.run_seeds() {
        let on_cfg = FederationConfig { spiking_enabled: true, ..cfg.federation(seed) };
        let off_cfg = FederationConfig { spiking_enabled: false, ..on_cfg.clone() };
        let on = run_once(&data, cfg, &on_cfg)?;
        let off = run_once(&data, cfg, &off_cfg)?;
        if on.partition_hash != off.partition_hash {
            return Err(CliError::Io(format!("seed {seed}: ablation arms saw different partitions")));
        }
        pairs.push(Pair {
            seed,
            partition_hash: on.partition_hash.clone(),
            gap: on.final_accuracy - off.final_accuracy,
            on: strip_logs(on),
            off: strip_logs(off),
        });
    }
    let rows: Vec<ArmRow> = pairs
        .iter()
        .flat_map(|p| {
            [("on", &p.on), ("off", &p.off)].map(|(arm, r)| ArmRow {
                seed: p.seed,
                arm,
                final_accuracy: r.final_accuracy,
                partition_hash: &p.partition_hash,
            })
        })
        .collect();
    let csv_path = cfg.out.join("ablation.csv");
    write_csv(&csv_path, &rows)?;
    let on: Vec<f64> = pairs.iter().map(|p| p.on.final_accuracy).collect();
    let off: Vec<f64> = pairs.iter().map(|p| p.off.final_accuracy).collect();
    let (median_on, median_off) = (median(&on), median(&off));
    let body = AblationBody { median_on, median_off, median_gap: median_on - median_off, pairs };
    let json_path = cfg.out.join("ablation.json");
    write_json(&json_path, &Summary { experiment: "ablation", config: cfg, body })?;
    Ok(vec![csv_path, json_path])
}
