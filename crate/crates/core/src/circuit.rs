//! The spiking variational classifier: angle encoding, layered `Rot` + ring-CZ
//! ansatz, threshold-gated Pauli-X spikes, grouped joint-measurement readout,
//! and parameter-shift gradients of the one-hot MSE.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use num_complex::Complex64;

use crate::qsim::{
    apply_single_raw, init_zero, matmul2, ry_matrix, rz_matrix, CompiledGate, Gate, Matrix2,
};

pub const DEFAULT_LAYERS: usize = 5;
pub const DEFAULT_QUBITS: usize = 4;
/// Sub-angles per `Rot` gate.
pub const ROT_ANGLES: usize = 3;

/// Trainable angles, laid out `[layer][qubit][sub-angle]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    n_layers: usize,
    n_qubits: usize,
    angles: Vec<f64>,
}

impl CircuitParams {
    pub fn zeros(n_layers: usize, n_qubits: usize) -> Self {
        Self {
            n_layers,
            n_qubits,
            angles: vec![0.0; n_layers * n_qubits * ROT_ANGLES],
        }
    }

    pub fn from_flat(n_layers: usize, n_qubits: usize, angles: Vec<f64>) -> Result<Self> {
        if n_layers == 0 || n_qubits == 0 {
            return Err(Error::Config("circuit needs at least one layer and one qubit".into()));
        }
        let expected = n_layers * n_qubits * ROT_ANGLES;
        if angles.len() != expected {
            return Err(Error::Usage(format!(
                "expected {expected} angles for {n_layers}x{n_qubits}x{ROT_ANGLES}, got {}",
                angles.len()
            )));
        }
        if let Some(i) = angles.iter().position(|a| !a.is_finite()) {
            return Err(Error::Validation(format!("angle {i} is not finite")));
        }
        Ok(Self {
            n_layers,
            n_qubits,
            angles,
        })
    }

    /// Angles drawn uniformly from `[0, 2π)`.
    pub fn random_uniform<R: Rng + ?Sized>(n_layers: usize, n_qubits: usize, rng: &mut R) -> Self {
        let angles = (0..n_layers * n_qubits * ROT_ANGLES)
            .map(|_| rng.gen_range(0.0..2.0 * PI))
            .collect();
        Self {
            n_layers,
            n_qubits,
            angles,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_layers == other.n_layers && self.n_qubits == other.n_qubits
    }

    #[inline]
    pub fn index(&self, layer: usize, qubit: usize, k: usize) -> usize {
        (layer * self.n_qubits + qubit) * ROT_ANGLES + k
    }

    pub fn get(&self, layer: usize, qubit: usize, k: usize) -> f64 {
        self.angles[self.index(layer, qubit, k)]
    }

    pub fn set(&mut self, layer: usize, qubit: usize, k: usize, value: f64) {
        let i = self.index(layer, qubit, k);
        self.angles[i] = value;
    }

    pub fn rot_angles(&self, layer: usize, qubit: usize) -> [f64; 3] {
        let i = self.index(layer, qubit, 0);
        [self.angles[i], self.angles[i + 1], self.angles[i + 2]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.angles
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.angles
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.angles
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeMode {
    /// One check after the last layer, against that layer's third angles.
    #[default]
    FinalLayer,
    /// A check after every layer, against that layer's third angles.
    PerLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeConfig {
    pub enabled: bool,
    pub threshold: f64,
    pub mode: SpikeMode,
}

impl SpikeConfig {
    pub fn new(enabled: bool, threshold: f64, mode: SpikeMode) -> Result<Self> {
        let cfg = Self {
            enabled,
            threshold,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn disabled() -> Self {
        Self {
            enabled: false,
            threshold: 0.0,
            mode: SpikeMode::FinalLayer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "spike threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Which qubits fire at each spike checkpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeMask {
    mode: SpikeMode,
    n_qubits: usize,
    fired: Vec<bool>,
}

impl SpikeMask {
    pub fn mode(&self) -> SpikeMode {
        self.mode
    }

    /// 1 in final-layer mode, `n_layers` in per-layer mode.
    pub fn n_checkpoints(&self) -> usize {
        self.fired.len() / self.n_qubits
    }

    pub fn fired(&self, checkpoint: usize, qubit: usize) -> bool {
        self.fired[checkpoint * self.n_qubits + qubit]
    }

    pub fn row(&self, checkpoint: usize) -> &[bool] {
        &self.fired[checkpoint * self.n_qubits..(checkpoint + 1) * self.n_qubits]
    }

    pub fn count(&self) -> usize {
        self.fired.iter().filter(|f| **f).count()
    }
}

/// `fired = angle > τ` (strict) on the third sub-angle of each `Rot`.
pub fn compute_spike_mask(params: &CircuitParams, cfg: &SpikeConfig) -> SpikeMask {
    let n_qubits = params.n_qubits();
    let layers: Vec<usize> = match cfg.mode {
        SpikeMode::FinalLayer => vec![params.n_layers() - 1],
        SpikeMode::PerLayer => (0..params.n_layers()).collect(),
    };
    let fired = layers
        .iter()
        .flat_map(|&l| (0..n_qubits).map(move |q| (l, q)))
        .map(|(l, q)| cfg.enabled && params.get(l, q, ROT_ANGLES - 1) > cfg.threshold)
        .collect();
    SpikeMask {
        mode: cfg.mode,
        n_qubits,
        fired,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingScale {
    /// `RY(π·x)`
    #[default]
    Pi,
    /// `RY(x)`
    One,
}

impl EncodingScale {
    fn factor(self) -> f64 {
        match self {
            EncodingScale::Pi => PI,
            EncodingScale::One => 1.0,
        }
    }
}

/// One `RY(scale·x[q])` per qubit.
pub fn encode(x: &[f64], scale: EncodingScale) -> Result<Vec<Gate>> {
    let bad: Vec<usize> = x
        .iter()
        .enumerate()
        .filter(|(_, v)| !(0.0..=1.0).contains(*v))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Validation(format!(
            "features outside [0, 1] at indices {bad:?}"
        )));
    }
    Ok(x.iter()
        .enumerate()
        .map(|(q, &v)| Gate::RY {
            target: q,
            angle: scale.factor() * v,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateRole {
    Encoding,
    Rotation { layer: usize, qubit: usize },
    Entangler { layer: usize },
    /// A threshold-conditional Pauli-X.
    Spike { checkpoint: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracedGate {
    pub gate: Gate,
    pub role: GateRole,
}

/// The full gate sequence executed for one sample under a fixed spike mask.
pub fn build_trace(
    x: &[f64],
    params: &CircuitParams,
    mask: &SpikeMask,
    scale: EncodingScale,
) -> Result<Vec<TracedGate>> {
    let n = params.n_qubits();
    if x.len() != n {
        return Err(Error::Usage(format!(
            "sample has {} features but the circuit has {n} qubits",
            x.len()
        )));
    }
    let ansatz = build_ansatz_trace(params, mask)?;
    let mut trace: Vec<TracedGate> = encode(x, scale)?
        .into_iter()
        .map(|gate| TracedGate {
            gate,
            role: GateRole::Encoding,
        })
        .collect();
    trace.extend(ansatz);
    Ok(trace)
}

/// The sample-independent part of the trace: layers of `Rot` + ring CZ with
/// the spike gates the mask calls for.
pub fn build_ansatz_trace(params: &CircuitParams, mask: &SpikeMask) -> Result<Vec<TracedGate>> {
    let n = params.n_qubits();
    if n < 2 {
        return Err(Error::Config("ring entanglement needs at least 2 qubits".into()));
    }
    if mask.n_qubits != n {
        return Err(Error::Usage("spike mask width does not match the circuit".into()));
    }
    let mut trace = Vec::with_capacity(params.n_layers() * (2 * n + n));
    let push_spikes = |trace: &mut Vec<TracedGate>, checkpoint: usize| {
        for q in 0..n {
            if mask.fired(checkpoint, q) {
                trace.push(TracedGate {
                    gate: Gate::PauliX { target: q },
                    role: GateRole::Spike { checkpoint },
                });
            }
        }
    };
    for layer in 0..params.n_layers() {
        for qubit in 0..n {
            trace.push(TracedGate {
                gate: Gate::Rot {
                    target: qubit,
                    angles: params.rot_angles(layer, qubit),
                },
                role: GateRole::Rotation { layer, qubit },
            });
            trace.push(TracedGate {
                gate: Gate::CZ {
                    control: qubit,
                    target: (qubit + 1) % n,
                },
                role: GateRole::Entangler { layer },
            });
        }
        if mask.mode == SpikeMode::PerLayer {
            push_spikes(&mut trace, layer);
        }
    }
    if mask.mode == SpikeMode::FinalLayer {
        push_spikes(&mut trace, 0);
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    pub class_probs: Vec<f64>,
    pub raw_probs: Vec<f64>,
    pub mask: SpikeMask,
}

/// Sums basis probabilities by `outcome mod n_classes`.
pub fn group_probs(raw: &[f64], n_classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_classes];
    for (o, p) in raw.iter().enumerate() {
        out[o % n_classes] += p;
    }
    out
}

/// One-hot MSE: `(1/C)·Σ_c (onehot(label)_c − p_c)²`.
pub fn loss(class_probs: &[f64], label: usize, n_classes: usize) -> Result<f64> {
    if label >= n_classes {
        return Err(Error::Validation(format!(
            "label {label} out of range for {n_classes} classes"
        )));
    }
    if class_probs.len() != n_classes {
        return Err(Error::Usage(format!(
            "{} class probabilities for {n_classes} classes",
            class_probs.len()
        )));
    }
    let sum: f64 = class_probs
        .iter()
        .enumerate()
        .map(|(c, p)| {
            let target = if c == label { 1.0 } else { 0.0 };
            (target - p) * (target - p)
        })
        .sum();
    Ok(sum / n_classes as f64)
}

/// Circuit readout settings shared by forward and gradient evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Circuit {
    pub n_classes: usize,
    pub encoding: EncodingScale,
}

impl Circuit {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            encoding: EncodingScale::Pi,
        }
    }

    pub fn with_encoding(mut self, encoding: EncodingScale) -> Self {
        self.encoding = encoding;
        self
    }

    fn check(&self, params: &CircuitParams) -> Result<()> {
        if self.n_classes == 0 || self.n_classes > 1 << params.n_qubits() {
            return Err(Error::Config(format!(
                "{} classes cannot be read out from {} qubits",
                self.n_classes,
                params.n_qubits()
            )));
        }
        Ok(())
    }

    pub fn forward(
        &self,
        x: &[f64],
        params: &CircuitParams,
        cfg: &SpikeConfig,
    ) -> Result<ForwardResult> {
        self.forward_with_mask(x, params, compute_spike_mask(params, cfg))
    }

    /// Forward pass with an externally fixed spike pattern.
    pub fn forward_with_mask(
        &self,
        x: &[f64],
        params: &CircuitParams,
        mask: SpikeMask,
    ) -> Result<ForwardResult> {
        self.check(params)?;
        let trace = build_trace(x, params, &mask, self.encoding)?;
        let mut state = init_zero(params.n_qubits())?;
        state.apply_all(trace.iter().map(|t| &t.gate))?;
        let raw_probs = state.probabilities();
        Ok(ForwardResult {
            class_probs: group_probs(&raw_probs, self.n_classes),
            raw_probs,
            mask,
        })
    }

    pub fn gradient(
        &self,
        x: &[f64],
        label: usize,
        params: &CircuitParams,
        cfg: &SpikeConfig,
    ) -> Result<CircuitParams> {
        Ok(self.loss_and_gradient(x, label, params, cfg)?.1)
    }

    /// Loss at `params` together with its parameter-shift gradient, the spike
    /// mask held at its value for the unshifted parameters.
    pub fn loss_and_gradient(
        &self,
        x: &[f64],
        label: usize,
        params: &CircuitParams,
        cfg: &SpikeConfig,
    ) -> Result<(f64, CircuitParams)> {
        self.loss_and_gradient_with_mask(x, label, params, &compute_spike_mask(params, cfg))
    }

    pub fn loss_and_gradient_with_mask(
        &self,
        x: &[f64],
        label: usize,
        params: &CircuitParams,
        mask: &SpikeMask,
    ) -> Result<(f64, CircuitParams)> {
        ShiftPlan::new(self, params, mask)?.loss_and_gradient(x, label)
    }
}

/// Parameter-shift evaluation for one `(params, mask)` pair, reusable across
/// samples.
///
/// Everything after the encoding is sample independent, so the unitary `S_g`
/// of the gates following each `Rot` is cached. Shifting sub-angle `k` of a
/// `Rot` by ±π/2 multiplies its Pauli factor by `(I ∓ iσ_k)/√2`, so the two
/// shifted output states are `(ψ_out ∓ i·S_g·B_k·ψ_g)/√2`, where `ψ_g` is the
/// state entering the gate and `B_k` is the `Rot` with `σ_k` inserted at the
/// position of sub-angle `k`. Both shifted circuits therefore cost a single
/// mat-vec, and the derivative is the exact two-point shift
/// `[f(θ+π/2) − f(θ−π/2)]/2`.
#[derive(Debug, Clone)]
pub struct ShiftPlan {
    circuit: Circuit,
    n_qubits: usize,
    n_layers: usize,
    ansatz: Vec<CompiledGate>,
    rotations: Vec<PlannedRotation>,
}

#[derive(Debug, Clone)]
struct PlannedRotation {
    position: usize,
    layer: usize,
    qubit: usize,
    /// Row-major unitary of `ansatz[position + 1..]`.
    suffix: Vec<Complex64>,
    inserted: [Matrix2; ROT_ANGLES],
}

impl ShiftPlan {
    pub fn new(circuit: &Circuit, params: &CircuitParams, mask: &SpikeMask) -> Result<Self> {
        circuit.check(params)?;
        let n_qubits = params.n_qubits();
        let trace = build_ansatz_trace(params, mask)?;
        let ansatz: Vec<CompiledGate> = trace
            .iter()
            .map(|t| CompiledGate::compile(&t.gate, n_qubits))
            .collect::<Result<_>>()?;
        let dim = 1usize << n_qubits;

        // Walk backwards, right-multiplying the running suffix by each gate.
        let mut suffix = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            suffix[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        let mut rotations = Vec::new();
        for (position, (t, gate)) in trace.iter().zip(&ansatz).enumerate().rev() {
            if let GateRole::Rotation { layer, qubit } = t.role {
                rotations.push(PlannedRotation {
                    position,
                    layer,
                    qubit,
                    suffix: suffix.clone(),
                    inserted: inserted_paulis(params.rot_angles(layer, qubit)),
                });
            }
            right_multiply(&mut suffix, dim, gate);
        }
        rotations.reverse();
        Ok(Self {
            circuit: *circuit,
            n_qubits,
            n_layers: params.n_layers(),
            ansatz,
            rotations,
        })
    }

    pub fn loss_and_gradient(&self, x: &[f64], label: usize) -> Result<(f64, CircuitParams)> {
        let n_classes = self.circuit.n_classes;
        if label >= n_classes {
            return Err(Error::Validation(format!(
                "label {label} out of range for {n_classes} classes"
            )));
        }
        if x.len() != self.n_qubits {
            return Err(Error::Usage(format!(
                "sample has {} features but the circuit has {} qubits",
                x.len(),
                self.n_qubits
            )));
        }
        let mut state = init_zero(self.n_qubits)?.amplitudes().to_vec();
        for gate in encode(x, self.circuit.encoding)? {
            CompiledGate::compile(&gate, self.n_qubits)?.apply_to(&mut state);
        }
        let dim = state.len();

        let mut entering = Vec::with_capacity(self.rotations.len() * dim);
        let mut next = self.rotations.iter().map(|r| r.position).peekable();
        for (position, gate) in self.ansatz.iter().enumerate() {
            if next.peek() == Some(&position) {
                entering.extend_from_slice(&state);
                next.next();
            }
            gate.apply_to(&mut state);
        }
        let output = state;
        let class_probs = group_amplitudes(&output, n_classes);
        let value = loss(&class_probs, label, n_classes)?;

        // dL/dp_c for the one-hot MSE.
        let scale = 2.0 / n_classes as f64;
        let dloss_dp: Vec<f64> = class_probs
            .iter()
            .enumerate()
            .map(|(c, p)| scale * (p - if c == label { 1.0 } else { 0.0 }))
            .collect();

        let mut grad = CircuitParams::zeros(self.n_layers, self.n_qubits);
        let mut branch = vec![Complex64::new(0.0, 0.0); dim];
        let mut carried = vec![Complex64::new(0.0, 0.0); dim];
        let mut plus = vec![0.0; n_classes];
        let mut minus = vec![0.0; n_classes];
        let minus_i = Complex64::new(0.0, -1.0);
        for (r, rot) in self.rotations.iter().enumerate() {
            let psi = &entering[r * dim..(r + 1) * dim];
            for (k, b) in rot.inserted.iter().enumerate() {
                branch.copy_from_slice(psi);
                apply_single_raw(&mut branch, b, rot.qubit);
                for (row, out) in rot.suffix.chunks_exact(dim).zip(carried.iter_mut()) {
                    *out = row.iter().zip(&branch).map(|(m, v)| m * v).sum();
                }
                plus.iter_mut().for_each(|v| *v = 0.0);
                minus.iter_mut().for_each(|v| *v = 0.0);
                for (o, (u, v)) in output.iter().zip(&carried).enumerate() {
                    let iv = minus_i * v;
                    plus[o % n_classes] += 0.5 * (u + iv).norm_sqr();
                    minus[o % n_classes] += 0.5 * (u - iv).norm_sqr();
                }
                let d: f64 = dloss_dp
                    .iter()
                    .zip(plus.iter().zip(&minus))
                    .map(|(w, (p, m))| w * (p - m) / 2.0)
                    .sum();
                grad.set(rot.layer, rot.qubit, k, d);
            }
        }
        Ok((value, grad))
    }
}

/// `B_k` for k = 0, 1, 2: `Rot(a) = RZ(a2)·RY(a1)·RZ(a0)` with `Z`, `Y`, `Z`
/// inserted directly after the factor carrying sub-angle `k`.
fn inserted_paulis(a: [f64; 3]) -> [Matrix2; 3] {
    let (o, l, i) = (
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
    );
    let z: Matrix2 = [[l, o], [o, -l]];
    let y: Matrix2 = [[o, -i], [i, o]];
    let (rz0, ry1, rz2) = (rz_matrix(a[0]), ry_matrix(a[1]), rz_matrix(a[2]));
    [
        matmul2(&rz2, &matmul2(&ry1, &matmul2(&z, &rz0))),
        matmul2(&rz2, &matmul2(&y, &matmul2(&ry1, &rz0))),
        matmul2(&z, &matmul2(&rz2, &matmul2(&ry1, &rz0))),
    ]
}

/// `m ← m·G` for a row-major `dim × dim` matrix.
fn right_multiply(m: &mut [Complex64], dim: usize, gate: &CompiledGate) {
    match *gate {
        CompiledGate::Single { ref matrix, target } => {
            let bit = 1usize << target;
            for row in m.chunks_exact_mut(dim) {
                for j in 0..dim {
                    if j & bit == 0 {
                        let (a, b) = (row[j], row[j | bit]);
                        row[j] = a * matrix[0][0] + b * matrix[1][0];
                        row[j | bit] = a * matrix[0][1] + b * matrix[1][1];
                    }
                }
            }
        }
        CompiledGate::PhaseFlip { mask } => {
            for row in m.chunks_exact_mut(dim) {
                for (j, v) in row.iter_mut().enumerate() {
                    if j & mask == mask {
                        *v = -*v;
                    }
                }
            }
        }
        CompiledGate::Flip { bit } => {
            for row in m.chunks_exact_mut(dim) {
                for j in 0..dim {
                    if j & bit == 0 {
                        row.swap(j, j | bit);
                    }
                }
            }
        }
    }
}

fn group_amplitudes(amps: &[Complex64], n_classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_classes];
    for (o, a) in amps.iter().enumerate() {
        out[o % n_classes] += a.norm_sqr();
    }
    out
}

/// [`Circuit::forward`] with `RY(π·x)` encoding.
pub fn forward(
    x: &[f64],
    params: &CircuitParams,
    cfg: &SpikeConfig,
    n_classes: usize,
) -> Result<ForwardResult> {
    Circuit::new(n_classes).forward(x, params, cfg)
}

/// [`Circuit::gradient`] with `RY(π·x)` encoding.
pub fn gradient(
    x: &[f64],
    label: usize,
    params: &CircuitParams,
    cfg: &SpikeConfig,
    n_classes: usize,
) -> Result<CircuitParams> {
    Circuit::new(n_classes).gradient(x, label, params, cfg)
}
