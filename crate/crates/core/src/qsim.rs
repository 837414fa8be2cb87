//! Dense statevector simulator for a handful of qubits.
//!
//! Basis ordering: qubit 0 is the least significant bit of the amplitude
//! index, so `|q3 q2 q1 q0>` lives at index `q0 + 2*q1 + 4*q2 + 8*q3`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest register the simulator will allocate.
pub const MAX_QUBITS: usize = 12;

pub type Matrix2 = [[Complex64; 2]; 2];

/// The gate set used by the spiking circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    /// `RY(φ) = [[cos φ/2, -sin φ/2], [sin φ/2, cos φ/2]]`
    RY { target: usize, angle: f64 },
    /// `RZ(φ) = diag(e^{-iφ/2}, e^{iφ/2})`
    RZ { target: usize, angle: f64 },
    /// `Rot(a, b, c) = RZ(c) · RY(b) · RZ(a)`, so `a` acts first.
    Rot { target: usize, angles: [f64; 3] },
    /// Negates amplitudes whose control and target bits are both set.
    CZ { control: usize, target: usize },
    PauliX { target: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    RY,
    RZ,
    Rot,
    CZ,
    PauliX,
}

impl Gate {
    pub fn kind(&self) -> GateKind {
        match self {
            Gate::RY { .. } => GateKind::RY,
            Gate::RZ { .. } => GateKind::RZ,
            Gate::Rot { .. } => GateKind::Rot,
            Gate::CZ { .. } => GateKind::CZ,
            Gate::PauliX { .. } => GateKind::PauliX,
        }
    }

    pub fn target(&self) -> usize {
        match *self {
            Gate::RY { target, .. }
            | Gate::RZ { target, .. }
            | Gate::Rot { target, .. }
            | Gate::CZ { target, .. }
            | Gate::PauliX { target } => target,
        }
    }

    pub fn control(&self) -> Option<usize> {
        match *self {
            Gate::CZ { control, .. } => Some(control),
            _ => None,
        }
    }

    pub fn angles(&self) -> &[f64] {
        match self {
            Gate::RY { angle, .. } | Gate::RZ { angle, .. } => std::slice::from_ref(angle),
            Gate::Rot { angles, .. } => angles,
            Gate::CZ { .. } | Gate::PauliX { .. } => &[],
        }
    }

    /// 2x2 unitary for single-qubit gates, `None` for CZ.
    pub fn matrix(&self) -> Option<Matrix2> {
        match *self {
            Gate::RY { angle, .. } => Some(ry_matrix(angle)),
            Gate::RZ { angle, .. } => Some(rz_matrix(angle)),
            Gate::Rot { angles, .. } => Some(rot_matrix(angles)),
            Gate::PauliX { .. } => {
                let (o, l) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
                Some([[o, l], [l, o]])
            }
            Gate::CZ { .. } => None,
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let target = self.target();
        if target >= n_qubits {
            return Err(Error::Usage(format!(
                "{:?} target qubit {target} out of range for {n_qubits} qubits",
                self.kind()
            )));
        }
        if let Some(control) = self.control() {
            if control >= n_qubits {
                return Err(Error::Usage(format!(
                    "CZ control qubit {control} out of range for {n_qubits} qubits"
                )));
            }
            if control == target {
                return Err(Error::Usage(format!(
                    "CZ control and target are both qubit {target}"
                )));
            }
        }
        Ok(())
    }
}

pub fn ry_matrix(angle: f64) -> Matrix2 {
    let (s, c) = (angle / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

pub fn rz_matrix(angle: f64) -> Matrix2 {
    let zero = Complex64::new(0.0, 0.0);
    [
        [Complex64::from_polar(1.0, -angle / 2.0), zero],
        [zero, Complex64::from_polar(1.0, angle / 2.0)],
    ]
}

pub fn rot_matrix(angles: [f64; 3]) -> Matrix2 {
    matmul2(
        &rz_matrix(angles[2]),
        &matmul2(&ry_matrix(angles[1]), &rz_matrix(angles[0])),
    )
}

pub fn matmul2(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// A gate reduced to the data the amplitude kernels need. Indices are not
/// re-validated when applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompiledGate {
    Single { matrix: Matrix2, target: usize },
    /// Negate amplitudes where every bit in `mask` is set.
    PhaseFlip { mask: usize },
    /// Swap amplitude pairs differing in `bit`.
    Flip { bit: usize },
}

impl CompiledGate {
    pub fn compile(gate: &Gate, n_qubits: usize) -> Result<Self> {
        gate.validate(n_qubits)?;
        Ok(match *gate {
            Gate::CZ { control, target } => CompiledGate::PhaseFlip {
                mask: (1 << control) | (1 << target),
            },
            Gate::PauliX { target } => CompiledGate::Flip { bit: 1 << target },
            _ => CompiledGate::Single {
                matrix: gate.matrix().expect("single-qubit gate has a matrix"),
                target: gate.target(),
            },
        })
    }

    #[inline]
    pub fn apply_to(&self, amps: &mut [Complex64]) {
        match *self {
            CompiledGate::Single { ref matrix, target } => apply_single_raw(amps, matrix, target),
            CompiledGate::PhaseFlip { mask } => {
                for (i, a) in amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *a = -*a;
                    }
                }
            }
            CompiledGate::Flip { bit } => {
                for i in 0..amps.len() {
                    if i & bit == 0 {
                        amps.swap(i, i | bit);
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn apply_single_raw(amps: &mut [Complex64], m: &Matrix2, target: usize) {
    let bit = 1usize << target;
    // Walk blocks of 2·bit: the lower half has the target bit clear.
    let mut base = 0;
    while base < amps.len() {
        for i in base..base + bit {
            let a0 = amps[i];
            let a1 = amps[i + bit];
            amps[i] = m[0][0] * a0 + m[0][1] * a1;
            amps[i + bit] = m[1][0] * a0 + m[1][1] * a1;
        }
        base += bit << 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

/// `|0...0>` on `n_qubits` qubits.
pub fn init_zero(n_qubits: usize) -> Result<Statevector> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::Config(format!(
            "qubit count {n_qubits} outside 1..={MAX_QUBITS}"
        )));
    }
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
    amplitudes[0] = Complex64::new(1.0, 0.0);
    Ok(Statevector {
        n_qubits,
        amplitudes,
    })
}

/// Applies `gate` to a copy of `state`.
pub fn apply_gate(state: &Statevector, gate: &Gate) -> Result<Statevector> {
    let mut out = state.clone();
    out.apply(gate)?;
    Ok(out)
}

impl Statevector {
    /// Wraps raw amplitudes. The caller is responsible for normalization.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() || len.trailing_zeros() as usize > MAX_QUBITS {
            return Err(Error::Config(format!(
                "amplitude vector of length {len} is not 2^n for 1 <= n <= {MAX_QUBITS}"
            )));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        CompiledGate::compile(gate, self.n_qubits)?.apply_to(&mut self.amplitudes);
        Ok(())
    }

    pub fn apply_all<'a>(&mut self, gates: impl IntoIterator<Item = &'a Gate>) -> Result<()> {
        for gate in gates {
            self.apply(gate)?;
        }
        Ok(())
    }

    /// Basis-state probabilities `|a_i|^2`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `<Z_qubit>`: +1 weight on basis states with the bit clear, -1 with it set.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.n_qubits {
            return Err(Error::Usage(format!(
                "qubit {qubit} out of range for {} qubits",
                self.n_qubits
            )));
        }
        let bit = 1usize << qubit;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| if i & bit == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }
}

pub fn probabilities(state: &Statevector) -> Vec<f64> {
    state.probabilities()
}

pub fn expectation_z(state: &Statevector, qubit: usize) -> Result<f64> {
    state.expectation_z(qubit)
}
