//! Simulated federation: non-IID sharding, per-client Adam training on the
//! one-hot MSE, unweighted parameter averaging, and the spike-threshold
//! schedule across rounds.

mod adam;
mod partition;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use partition::{partition_fingerprint, partition_non_iid, tv_distance, ClientShard};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{
    compute_spike_mask, Circuit, CircuitParams, EncodingScale, ShiftPlan, SpikeConfig, SpikeMode,
};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::metrics::argmax;
use crate::seed::{derive_seed, stream};

/// What one tick of the threshold schedule means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauTick {
    /// τ advances once per global round.
    #[default]
    Global,
    /// τ advances once per local iteration (round·local_iters + iter).
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// One Adam step per local iteration on the shard-mean gradient.
    #[default]
    Full,
    /// One Adam step per sample, visiting the shard in a seeded shuffled order.
    PerSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub n_clients: usize,
    pub local_iters: usize,
    pub global_rounds: usize,
    pub learning_rate: f64,
    pub dirichlet_alpha: f64,
    pub seed: u64,
    pub tau_initial: f64,
    pub tau_increment: f64,
    pub tau_max: f64,
    pub tau_fixed: Option<f64>,
    pub tau_tick: TauTick,
    pub spiking_enabled: bool,
    pub spiking_mode: SpikeMode,
    pub n_layers: usize,
    pub encoding: EncodingScale,
    pub batch_mode: BatchMode,
}

impl Default for FederationConfig {
    /// Table-scale federation: 20 clients, 100 local iterations, 100 rounds.
    fn default() -> Self {
        Self {
            n_clients: 20,
            local_iters: 100,
            global_rounds: 100,
            learning_rate: 0.05,
            dirichlet_alpha: 0.5,
            seed: 0,
            tau_initial: 0.0,
            tau_increment: 0.05,
            tau_max: 1.0,
            tau_fixed: None,
            tau_tick: TauTick::Global,
            spiking_enabled: true,
            spiking_mode: SpikeMode::FinalLayer,
            n_layers: crate::circuit::DEFAULT_LAYERS,
            encoding: EncodingScale::Pi,
            batch_mode: BatchMode::Full,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} outside [0, 1]")))
            }
        };
        if self.n_clients == 0 {
            return Err(Error::Config("n_clients must be positive".into()));
        }
        if self.n_layers == 0 {
            return Err(Error::Config("n_layers must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(Error::Config(format!(
                "dirichlet_alpha must be positive, got {}",
                self.dirichlet_alpha
            )));
        }
        unit("tau_initial", self.tau_initial)?;
        unit("tau_max", self.tau_max)?;
        if let Some(t) = self.tau_fixed {
            unit("tau_fixed", t)?;
        }
        if self.tau_initial > self.tau_max {
            return Err(Error::Config(format!(
                "tau_initial {} exceeds tau_max {}",
                self.tau_initial, self.tau_max
            )));
        }
        if !(self.tau_increment >= 0.0 && self.tau_increment.is_finite()) {
            return Err(Error::Config(format!(
                "tau_increment must be non-negative, got {}",
                self.tau_increment
            )));
        }
        Ok(())
    }

    pub fn spike_config(&self, tau: f64) -> SpikeConfig {
        SpikeConfig {
            enabled: self.spiking_enabled,
            threshold: tau,
            mode: self.spiking_mode,
        }
    }
}

/// τ at schedule tick `tick`: the fixed value when set, otherwise
/// `min(tau_initial + tau_increment·tick, tau_max)`.
pub fn schedule_tau(tick: usize, cfg: &FederationConfig) -> f64 {
    match cfg.tau_fixed {
        Some(t) => t,
        None => (cfg.tau_initial + cfg.tau_increment * tick as f64).min(cfg.tau_max),
    }
}

/// Elementwise mean of the client tensors.
pub fn aggregate(client_params: &[CircuitParams]) -> Result<CircuitParams> {
    let first = client_params
        .first()
        .ok_or_else(|| Error::Usage("cannot aggregate an empty client list".into()))?;
    if let Some(i) = client_params.iter().position(|p| !p.same_shape(first)) {
        return Err(Error::Usage(format!(
            "client {i} parameter shape {}x{} differs from {}x{}",
            client_params[i].n_layers(),
            client_params[i].n_qubits(),
            first.n_layers(),
            first.n_qubits()
        )));
    }
    let n = client_params.len() as f64;
    let mut column = Vec::with_capacity(client_params.len());
    let mean = (0..first.len())
        .map(|i| {
            column.clear();
            column.extend(client_params.iter().map(|p| p.as_slice()[i]));
            column.sort_by(f64::total_cmp);
            // centring on the median keeps identical inputs exact
            let pivot = column[column.len() / 2];
            column.iter_mut().for_each(|v| *v -= pivot);
            pivot + compensated_sum(&column) / n
        })
        .collect();
    CircuitParams::from_flat(first.n_layers(), first.n_qubits(), mean)
}

/// Neumaier summation. Callers sort first so the result ignores client order.
fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for &v in values {
        let t = sum + v;
        carry += if f64::abs(sum) >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

/// Everything a client needs to run its local optimisation.
#[derive(Debug, Clone, Copy)]
pub struct LocalTrainer<'a> {
    pub circuit: Circuit,
    pub cfg: &'a FederationConfig,
    /// Global round being trained; offsets the τ tick and the client RNG.
    pub round: usize,
}

impl LocalTrainer<'_> {
    fn tick(&self, iter: usize) -> usize {
        match self.cfg.tau_tick {
            TauTick::Global => self.round,
            TauTick::Local => self.round * self.cfg.local_iters + iter,
        }
    }

    /// τ used by the last local iteration of the round.
    pub fn round_tau(&self) -> f64 {
        schedule_tau(self.tick(self.cfg.local_iters.saturating_sub(1)), self.cfg)
    }

    /// Trains from `params` on one shard. Returns the new parameters and the
    /// shard-mean loss observed on the final iteration.
    pub fn local_update(
        &self,
        shard: &ClientShard,
        params: &CircuitParams,
    ) -> Result<(CircuitParams, f64)> {
        if shard.is_empty() {
            return Err(Error::Usage(format!("client {} has an empty shard", shard.client_id)));
        }
        let mut params = params.clone();
        let mut adam = AdamState::for_params(&params);
        let lr = self.cfg.learning_rate;
        if self.cfg.local_iters == 0 {
            let spike = self.cfg.spike_config(self.round_tau());
            let loss = mean_loss(&self.circuit, shard, &params, &spike)?;
            return Ok((params, loss));
        }
        let mut order: Vec<usize> = (0..shard.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            self.cfg.seed,
            stream::CLIENT,
            self.round as u64,
            shard.client_id as u64,
        ));
        let mut last_loss = 0.0;
        for iter in 0..self.cfg.local_iters {
            let spike = self.cfg.spike_config(schedule_tau(self.tick(iter), self.cfg));
            match self.cfg.batch_mode {
                BatchMode::Full => {
                    let (loss, grad) = batch_gradient(&self.circuit, shard, &params, &spike)?;
                    adam.step(params.as_mut_slice(), &grad, lr)
                        .map_err(|e| client_error(shard, iter, e))?;
                    last_loss = loss;
                }
                BatchMode::PerSample => {
                    order.shuffle(&mut rng);
                    let mut total = 0.0;
                    for &i in &order {
                        let (loss, grad) = self.circuit.loss_and_gradient(
                            &shard.features[i],
                            shard.labels[i],
                            &params,
                            &spike,
                        )?;
                        adam.step(params.as_mut_slice(), grad.as_slice(), lr)
                            .map_err(|e| client_error(shard, iter, e))?;
                        total += loss;
                    }
                    last_loss = total / shard.len() as f64;
                }
            }
        }
        Ok((params, last_loss))
    }
}

fn client_error(shard: &ClientShard, iter: usize, e: Error) -> Error {
    match e {
        Error::Training(msg) => Error::Training(format!(
            "client {} local iteration {iter}: {msg}",
            shard.client_id
        )),
        other => other,
    }
}

/// Shard-mean loss and gradient. Per-sample terms are summed in shard order.
pub fn batch_gradient(
    circuit: &Circuit,
    shard: &ClientShard,
    params: &CircuitParams,
    spike: &SpikeConfig,
) -> Result<(f64, Vec<f64>)> {
    let plan = ShiftPlan::new(circuit, params, &compute_spike_mask(params, spike))?;
    let per_sample: Vec<(f64, CircuitParams)> = shard
        .features
        .par_iter()
        .zip(shard.labels.par_iter())
        .map(|(x, &y)| plan.loss_and_gradient(x, y))
        .collect::<Result<_>>()?;
    let n = shard.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (l, g) in &per_sample {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g.as_slice()) {
            *acc += v;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

fn mean_loss(
    circuit: &Circuit,
    shard: &ClientShard,
    params: &CircuitParams,
    spike: &SpikeConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, &y) in shard.features.iter().zip(&shard.labels) {
        let r = circuit.forward(x, params, spike)?;
        total += crate::circuit::loss(&r.class_probs, y, circuit.n_classes)?;
    }
    Ok(total / shard.len() as f64)
}

/// Runs `local_iters` iterations of the configured local optimiser on one shard
/// with τ ticking from round 0.
pub fn local_update(
    shard: &ClientShard,
    params: &CircuitParams,
    cfg: &FederationConfig,
    n_classes: usize,
) -> Result<(CircuitParams, f64)> {
    LocalTrainer {
        circuit: Circuit::new(n_classes).with_encoding(cfg.encoding),
        cfg,
        round: 0,
    }
    .local_update(shard, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub global_accuracy: f64,
    pub global_loss: f64,
    pub tau: f64,
    pub per_client_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: CircuitParams,
    pub logs: Vec<RoundLog>,
    pub partition_fingerprint: u64,
    /// τ in force for the final model (the last logged τ, or the round-0 τ).
    pub final_tau: f64,
}

/// Test-set accuracy and mean one-hot MSE.
pub fn evaluate_params(
    circuit: &Circuit,
    data: &Dataset,
    params: &CircuitParams,
    spike: &SpikeConfig,
) -> Result<(f64, f64)> {
    let probs = predict_probs(circuit, data, params, spike)?;
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (p, &y) in probs.iter().zip(&data.labels) {
        if argmax(p) == y {
            correct += 1;
        }
        loss += crate::circuit::loss(p, y, circuit.n_classes)?;
    }
    let n = data.labels.len().max(1) as f64;
    Ok((correct as f64 / n, loss / n))
}

pub fn predict_probs(
    circuit: &Circuit,
    data: &Dataset,
    params: &CircuitParams,
    spike: &SpikeConfig,
) -> Result<Vec<Vec<f64>>> {
    data.features
        .par_iter()
        .map(|x| circuit.forward(x, params, spike).map(|r| r.class_probs))
        .collect()
}

/// Full federated run: seeded `[0, 2π)` initialisation, then per round
/// broadcast → local training on every shard → mean aggregation → test-set
/// evaluation. Bit-reproducible for a fixed config.
pub fn train_federated(
    train: &Dataset,
    test: &Dataset,
    cfg: &FederationConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.n_classes != test.n_classes {
        return Err(Error::Usage("train and test class counts differ".into()));
    }
    let n_qubits = train.n_features()?;
    let circuit = Circuit::new(train.n_classes).with_encoding(cfg.encoding);
    let shards = partition_non_iid(
        &train.features,
        &train.labels,
        cfg.n_clients,
        cfg.dirichlet_alpha,
        cfg.seed,
    )?;
    let fingerprint = partition_fingerprint(&shards);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::INIT, 0, 0));
    let mut global = CircuitParams::random_uniform(cfg.n_layers, n_qubits, &mut rng);

    let mut logs = Vec::with_capacity(cfg.global_rounds);
    let mut final_tau = schedule_tau(0, cfg);
    for round in 0..cfg.global_rounds {
        let trainer = LocalTrainer {
            circuit,
            cfg,
            round,
        };
        let tau = trainer.round_tau();
        let results: Vec<(CircuitParams, f64)> = shards
            .par_iter()
            .map(|shard| trainer.local_update(shard, &global))
            .collect::<Result<_>>()?;
        let (client_params, per_client_loss): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        global = aggregate(&client_params)?;
        let (global_accuracy, global_loss) =
            evaluate_params(&circuit, test, &global, &cfg.spike_config(tau))?;
        logs.push(RoundLog {
            round,
            global_accuracy,
            global_loss,
            tau,
            per_client_loss,
        });
        final_tau = tau;
    }
    Ok(TrainOutcome {
        params: global,
        logs,
        partition_fingerprint: fingerprint,
        final_tau,
    })
}
