//! Reference implementations used only by tests.
//!
//! Everything here is built from first principles (explicit 2x2 matrices,
//! Kronecker products, dense matrix-vector products) and shares no code with
//! the simulator it checks.

#![allow(dead_code, clippy::needless_range_loop, clippy::too_many_arguments)]

use num_complex::Complex64;
use std::f64::consts::PI;

pub type Dense = Vec<Vec<Complex64>>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(dim: usize) -> Dense {
    (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect())
        .collect()
}

pub fn kron(a: &Dense, b: &Dense) -> Dense {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0, 0.0); ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![c(0.0, 0.0); m]; n];
    for i in 0..n {
        for k in 0..b.len() {
            for j in 0..m {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn matvec(a: &Dense, v: &[Complex64]) -> Vec<Complex64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

pub fn ry(t: f64) -> Dense {
    vec![
        vec![c((t / 2.0).cos(), 0.0), c(-(t / 2.0).sin(), 0.0)],
        vec![c((t / 2.0).sin(), 0.0), c((t / 2.0).cos(), 0.0)],
    ]
}

pub fn rz(t: f64) -> Dense {
    vec![
        vec![c((t / 2.0).cos(), -(t / 2.0).sin()), c(0.0, 0.0)],
        vec![c(0.0, 0.0), c((t / 2.0).cos(), (t / 2.0).sin())],
    ]
}

pub fn pauli_x() -> Dense {
    vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]
}

pub fn projector_one() -> Dense {
    vec![vec![c(0.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]]
}

/// `RZ(c)·RY(b)·RZ(a)` by explicit multiplication.
pub fn rot(a: f64, b: f64, cc: f64) -> Dense {
    matmul(&rz(cc), &matmul(&ry(b), &rz(a)))
}

/// Lifts a one-qubit operator to `n` qubits. Qubit 0 is the least significant
/// index bit, i.e. the rightmost Kronecker factor.
pub fn embed(op: &Dense, qubit: usize, n: usize) -> Dense {
    let mut out = vec![vec![c(1.0, 0.0)]];
    for pos in (0..n).rev() {
        let factor = if pos == qubit { op.clone() } else { identity(2) };
        out = kron(&out, &factor);
    }
    out
}

/// `I − 2·|11><11|` on the two qubits.
pub fn cz(a: usize, b: usize, n: usize) -> Dense {
    let mut p = vec![vec![c(1.0, 0.0)]];
    for pos in (0..n).rev() {
        let factor = if pos == a || pos == b { projector_one() } else { identity(2) };
        p = kron(&p, &factor);
    }
    let dim = 1 << n;
    let id = identity(dim);
    (0..dim)
        .map(|i| (0..dim).map(|j| id[i][j] - p[i][j] * 2.0).collect())
        .collect()
}

pub fn zero_state(n: usize) -> Vec<Complex64> {
    let mut v = vec![c(0.0, 0.0); 1 << n];
    v[0] = c(1.0, 0.0);
    v
}

/// Angles indexed `[layer][qubit][k]`.
pub type Angles = Vec<Vec<[f64; 3]>>;

/// Which qubits fire, per checkpoint. One row for final-layer checks, one row
/// per layer for per-layer checks.
#[derive(Clone, Debug)]
pub struct Spikes {
    pub per_layer: bool,
    pub fired: Vec<Vec<bool>>,
}

impl Spikes {
    pub fn none(n_qubits: usize) -> Self {
        Self { per_layer: false, fired: vec![vec![false; n_qubits]] }
    }

    /// Decides firing straight from the angles: third angle strictly above τ.
    pub fn decide(angles: &Angles, tau: f64, per_layer: bool) -> Self {
        let rows: Vec<&Vec<[f64; 3]>> = if per_layer {
            angles.iter().collect()
        } else {
            vec![angles.last().unwrap()]
        };
        Self {
            per_layer,
            fired: rows.iter().map(|layer| layer.iter().map(|a| a[2] > tau).collect()).collect(),
        }
    }
}

/// Dense evaluation of the whole classifier; returns the 2^n basis probabilities.
pub fn circuit_probs(x: &[f64], angles: &Angles, spikes: &Spikes) -> Vec<f64> {
    let n = x.len();
    let mut psi = zero_state(n);
    for (q, v) in x.iter().enumerate() {
        psi = matvec(&embed(&ry(PI * v), q, n), &psi);
    }
    let apply_spikes = |psi: Vec<Complex64>, row: &[bool]| {
        let mut psi = psi;
        for (q, fire) in row.iter().enumerate() {
            if *fire {
                psi = matvec(&embed(&pauli_x(), q, n), &psi);
            }
        }
        psi
    };
    for (l, layer) in angles.iter().enumerate() {
        for (q, a) in layer.iter().enumerate() {
            psi = matvec(&embed(&rot(a[0], a[1], a[2]), q, n), &psi);
            psi = matvec(&cz(q, (q + 1) % n, n), &psi);
        }
        if spikes.per_layer {
            psi = apply_spikes(psi, &spikes.fired[l]);
        }
    }
    if !spikes.per_layer {
        psi = apply_spikes(psi, &spikes.fired[0]);
    }
    psi.iter().map(|a| a.norm_sqr()).collect()
}

pub fn class_probs(x: &[f64], angles: &Angles, spikes: &Spikes, n_classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_classes];
    for (o, p) in circuit_probs(x, angles, spikes).iter().enumerate() {
        out[o % n_classes] += p;
    }
    out
}

pub fn mse(probs: &[f64], label: usize) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(c, p)| {
            let t = if c == label { 1.0 } else { 0.0 };
            (t - p) * (t - p)
        })
        .sum::<f64>()
        / probs.len() as f64
}

/// Central differences of the loss with the given spike pattern held fixed.
pub fn finite_difference_gradient(
    x: &[f64],
    label: usize,
    angles: &Angles,
    spikes: &Spikes,
    n_classes: usize,
    h: f64,
) -> Angles {
    let mut grad = angles.clone();
    for l in 0..angles.len() {
        for q in 0..angles[l].len() {
            for k in 0..3 {
                let mut up = angles.clone();
                up[l][q][k] += h;
                let mut down = angles.clone();
                down[l][q][k] -= h;
                let fu = mse(&class_probs(x, &up, spikes, n_classes), label);
                let fd = mse(&class_probs(x, &down, spikes, n_classes), label);
                grad[l][q][k] = (fu - fd) / (2.0 * h);
            }
        }
    }
    grad
}

/// Central differences where each perturbed point re-decides which qubits fire.
pub fn mask_switching_difference(
    x: &[f64],
    label: usize,
    angles: &Angles,
    tau: f64,
    per_layer: bool,
    n_classes: usize,
    h: f64,
    at: (usize, usize, usize),
) -> f64 {
    let (l, q, k) = at;
    let mut up = angles.clone();
    up[l][q][k] += h;
    let mut down = angles.clone();
    down[l][q][k] -= h;
    let fu = mse(&class_probs(x, &up, &Spikes::decide(&up, tau, per_layer), n_classes), label);
    let fd = mse(&class_probs(x, &down, &Spikes::decide(&down, tau, per_layer), n_classes), label);
    (fu - fd) / (2.0 * h)
}

/// Mean computed through an exact fixed-point sum (2^-70 resolution), so
/// the only rounding happens in the final conversion and division.
pub fn exact_mean(values: &[f64]) -> f64 {
    let scale = 2f64.powi(70);
    let total: i128 = values.iter().map(|v| (v * scale).round() as i128).sum();
    (total as f64 / scale) / values.len() as f64
}

/// Dense single-step Adam oracle: the first step is `lr·g/(|g|+ε)`.
pub fn adam_first_step(g: f64, lr: f64, eps: f64) -> f64 {
    lr * g / (g.abs() + eps)
}

/// Hand-evaluated Adam recursion for a constant scalar gradient.
pub fn adam_scalar_trajectory(theta0: f64, g: f64, lr: f64, steps: usize) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut m, mut v, mut theta) = (0.0, 0.0, theta0);
    let mut out = Vec::new();
    for t in 1..=steps {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t as i32));
        let v_hat = v / (1.0 - b2.powi(t as i32));
        theta -= lr * m_hat / (v_hat.sqrt() + eps);
        out.push(theta);
    }
    out
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations. Returns
/// eigenvalues (descending) and matching unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = cs * mkp - sn * mkq;
                    m[k][q] = sn * mkp + cs * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = cs * mpk - sn * mqk;
                    m[q][k] = sn * mpk + cs * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = cs * vp - sn * vq;
                    row[q] = sn * vp + cs * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|r| v[r][i]).collect()).collect();
    (values, vectors)
}

/// Confusion matrix `[true][predicted]` with lowest-index argmax.
pub fn confusion(probs: &[Vec<f64>], labels: &[usize]) -> Vec<Vec<usize>> {
    let k = probs[0].len();
    let mut cm = vec![vec![0; k]; k];
    for (row, &y) in probs.iter().zip(labels) {
        let mut best = 0;
        for j in 1..k {
            if row[j] > row[best] {
                best = j;
            }
        }
        cm[y][best] += 1;
    }
    cm
}
