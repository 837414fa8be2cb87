//! Label-skewed client partitioning via per-class Dirichlet allocation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, stream};

/// Redraws attempted before falling back to moving samples into empty shards.
const MAX_DRAWS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    pub client_id: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Row indices into the partitioned input, ascending.
    pub sample_indices: Vec<usize>,
}

impl ClientShard {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_histogram(&self, n_classes: usize) -> Vec<usize> {
        let mut h = vec![0; n_classes];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }
}

/// Splits rows among `n_clients` so that each class is spread according to its
/// own Dirichlet(`alpha`) draw. Every row lands in exactly one shard and no
/// shard is empty.
pub fn partition_non_iid(
    features: &[Vec<f64>],
    labels: &[usize],
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<ClientShard>> {
    if features.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let assignment = assign_indices(labels, n_clients, alpha, seed)?;
    Ok(assignment
        .into_iter()
        .enumerate()
        .map(|(client_id, sample_indices)| ClientShard {
            client_id,
            features: sample_indices.iter().map(|&i| features[i].clone()).collect(),
            labels: sample_indices.iter().map(|&i| labels[i]).collect(),
            sample_indices,
        })
        .collect())
}

fn assign_indices(
    labels: &[usize],
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if n_clients == 0 {
        return Err(Error::Config("need at least one client".into()));
    }
    if n_clients > labels.len() {
        return Err(Error::Config(format!(
            "cannot give {n_clients} clients a sample each from {} samples",
            labels.len()
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("dirichlet alpha must be positive, got {alpha}")));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::Config(format!("class {c} has no samples")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::PARTITION, 0, 0));
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Config(e.to_string()))?;

    let mut shards = vec![Vec::new(); n_clients];
    for _ in 0..MAX_DRAWS {
        shards = vec![Vec::new(); n_clients];
        for members in &by_class {
            let mut weights: Vec<f64> = (0..n_clients).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                weights.iter_mut().for_each(|w| *w /= total);
            } else {
                // every draw underflowed: hand the class to one client
                let pick = rand::Rng::gen_range(&mut rng, 0..n_clients);
                weights = (0..n_clients).map(|i| f64::from(u8::from(i == pick))).collect();
            }
            let n = members.len();
            let mut start = 0usize;
            let mut cumulative = 0.0;
            for (client, w) in weights.iter().enumerate() {
                cumulative += w;
                let end = if client + 1 == n_clients {
                    n
                } else {
                    ((cumulative * n as f64).round() as usize).clamp(start, n)
                };
                shards[client].extend_from_slice(&members[start..end]);
                start = end;
            }
        }
        if shards.iter().all(|s| !s.is_empty()) {
            break;
        }
    }

    while let Some(empty) = shards.iter().position(Vec::is_empty) {
        let donor = (0..n_clients)
            .max_by(|&a, &b| shards[a].len().cmp(&shards[b].len()).then(b.cmp(&a)))
            .expect("at least one client");
        let moved = shards[donor].pop().expect("donor holds at least two samples");
        shards[empty].push(moved);
    }
    for shard in &mut shards {
        shard.sort_unstable();
    }
    Ok(shards)
}

/// FNV-1a over the per-client index lists; equal partitions hash equal.
pub fn partition_fingerprint(shards: &[ClientShard]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
    };
    for shard in shards {
        eat(shard.client_id as u64);
        eat(shard.sample_indices.len() as u64);
        for &i in &shard.sample_indices {
            eat(i as u64);
        }
    }
    h
}

/// Total-variation distance between two count histograms.
pub fn tv_distance(a: &[usize], b: &[usize]) -> f64 {
    let (sa, sb) = (a.iter().sum::<usize>() as f64, b.iter().sum::<usize>() as f64);
    0.5 * a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / sa - y as f64 / sb).abs())
        .sum::<f64>()
}
