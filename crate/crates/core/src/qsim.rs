//! Exact statevector simulation of the variational circuit used by the hybrid actor.
//!
//! Qubit `i` is bit `i` of the amplitude index (little-endian), so `|10⟩` written
//! as `|q0 q1⟩` lives at index 1.
//!
//! The ansatz: angle-encode each qubit with `RY(enc[2i]) RZ(enc[2i+1])`, then for
//! every layer apply trainable `RY`, `RZ` per qubit, a ring of CNOTs
//! (`i -> (i+1) mod n`, ascending `i`), and a trainable `RX` per qubit. The readout
//! is `⟨Z_i⟩` on every qubit.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Complex amplitudes of an `n`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    n_qubits: usize,
}

impl StateVector {
    /// The computational basis state `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::ShapeMismatch {
                context: "basis state index",
                expected: dim,
                actual: index,
            });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self {
            amplitudes,
            n_qubits,
        })
    }

    /// Wraps raw amplitudes; the length must be a power of two and the vector normalized.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::InvalidCircuit(format!(
                "amplitude vector length {len} is not a power of two >= 2"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_qubit_count(n_qubits)?;
        let state = Self {
            amplitudes,
            n_qubits,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidCircuit(format!(
                "amplitudes are not normalized (norm² = {norm})"
            )));
        }
        Ok(state)
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

    /// Applies `exp(-i·angle/2·P)` for the Pauli `P` selected by `axis`.
    pub fn apply_rotation(&mut self, qubit: usize, axis: Axis, angle: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        let (s, c) = (angle * 0.5).sin_cos();
        let stride = 1usize << qubit;
        match axis {
            Axis::X => {
                let m = Complex64::new(0.0, -s);
                self.for_each_pair(stride, |a0, a1| (a0 * c + a1 * m, a0 * m + a1 * c));
            }
            Axis::Y => {
                self.for_each_pair(stride, |a0, a1| (a0 * c - a1 * s, a0 * s + a1 * c));
            }
            Axis::Z => {
                let lo = Complex64::new(c, -s);
                let hi = Complex64::new(c, s);
                self.for_each_pair(stride, |a0, a1| (a0 * lo, a1 * hi));
            }
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::CnotSameQubit(control));
        }
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
        Ok(())
    }

    /// `⟨Z_q⟩ = P(bit q = 0) − P(bit q = 1)`.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = 1usize << qubit;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    fn expectations_z(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_qubits];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (q, e) in out.iter_mut().enumerate() {
                if i & (1 << q) == 0 {
                    *e += p;
                } else {
                    *e -= p;
                }
            }
        }
        out
    }

    fn for_each_pair(
        &mut self,
        stride: usize,
        f: impl Fn(Complex64, Complex64) -> (Complex64, Complex64),
    ) {
        let dim = self.amplitudes.len();
        let mut base = 0;
        while base < dim {
            for i in base..base + stride {
                let j = i + stride;
                let (n0, n1) = f(self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = n0;
                self.amplitudes[j] = n1;
            }
            base += 2 * stride;
        }
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit < self.n_qubits {
            Ok(())
        } else {
            Err(Error::QubitOutOfRange {
                index: qubit,
                n_qubits: self.n_qubits,
            })
        }
    }
}

fn check_qubit_count(n_qubits: usize) -> Result<()> {
    if (1..=MAX_QUBITS).contains(&n_qubits) {
        Ok(())
    } else {
        Err(Error::InvalidCircuit(format!(
            "qubit count {n_qubits} outside 1..={MAX_QUBITS}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VqcConfig {
    pub n_qubits: usize,
    pub depth: usize,
}

impl Default for VqcConfig {
    fn default() -> Self {
        Self {
            n_qubits: 4,
            depth: 2,
        }
    }
}

impl VqcConfig {
    pub fn validate(&self) -> Result<()> {
        check_qubit_count(self.n_qubits)?;
        if self.depth == 0 {
            return Err(Error::InvalidCircuit("depth must be at least 1".into()));
        }
        Ok(())
    }

    /// `3 · n_q · L`.
    pub fn param_count(&self) -> usize {
        3 * self.n_qubits * self.depth
    }

    pub fn encoding_len(&self) -> usize {
        2 * self.n_qubits
    }
}

/// Trainable rotation angles, stored flat as `[layer][RY, RZ, RX][qubit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VqcParams {
    config: VqcConfig,
    angles: Vec<f64>,
}

const RY_SLOT: usize = 0;
const RZ_SLOT: usize = 1;
const RX_SLOT: usize = 2;

impl VqcParams {
    pub fn zeros(config: VqcConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            angles: vec![0.0; config.param_count()],
        })
    }

    pub fn from_angles(config: VqcConfig, angles: Vec<f64>) -> Result<Self> {
        config.validate()?;
        ensure_len("circuit parameters", config.param_count(), angles.len())?;
        Ok(Self { config, angles })
    }

    /// Angles drawn uniformly from `[-π, π)`.
    pub fn random(config: VqcConfig, rng: &mut impl rand::Rng) -> Result<Self> {
        config.validate()?;
        let angles = (0..config.param_count())
            .map(|_| rng.random_range(-PI..PI))
            .collect();
        Ok(Self { config, angles })
    }

    pub fn config(&self) -> VqcConfig {
        self.config
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn angles_mut(&mut self) -> &mut [f64] {
        &mut self.angles
    }

    pub fn index(&self, layer: usize, axis: Axis, qubit: usize) -> usize {
        let slot = match axis {
            Axis::Y => RY_SLOT,
            Axis::Z => RZ_SLOT,
            Axis::X => RX_SLOT,
        };
        (layer * 3 + slot) * self.config.n_qubits + qubit
    }
}

/// Maps state features to encoding angles `π·tanh(f)`, zero-padding to `2·n_q` slots.
pub fn encode_features(features: &[f64], n_qubits: usize) -> Result<Vec<f64>> {
    check_qubit_count(n_qubits)?;
    let slots = 2 * n_qubits;
    if features.len() > slots {
        return Err(Error::InvalidCircuit(format!(
            "{} features do not fit in {slots} encoding slots",
            features.len()
        )));
    }
    if let Some(i) = features.iter().position(|f| !f.is_finite()) {
        return Err(Error::NonFinite(format!("encoded feature {i}")));
    }
    let mut angles = vec![0.0; slots];
    for (angle, f) in angles.iter_mut().zip(features) {
        *angle = PI * f.tanh();
    }
    Ok(angles)
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Rot { qubit: usize, axis: Axis, param: usize },
    Cnot { control: usize, target: usize },
}

fn ansatz_ops(params: &VqcParams) -> Vec<Op> {
    let n = params.config.n_qubits;
    let mut ops = Vec::with_capacity(params.config.depth * 4 * n);
    for layer in 0..params.config.depth {
        for q in 0..n {
            ops.push(Op::Rot {
                qubit: q,
                axis: Axis::Y,
                param: params.index(layer, Axis::Y, q),
            });
            ops.push(Op::Rot {
                qubit: q,
                axis: Axis::Z,
                param: params.index(layer, Axis::Z, q),
            });
        }
        if n > 1 {
            for q in 0..n {
                ops.push(Op::Cnot {
                    control: q,
                    target: (q + 1) % n,
                });
            }
        }
        for q in 0..n {
            ops.push(Op::Rot {
                qubit: q,
                axis: Axis::X,
                param: params.index(layer, Axis::X, q),
            });
        }
    }
    ops
}

fn apply_op(state: &mut StateVector, op: Op, angles: &[f64]) -> Result<()> {
    match op {
        Op::Rot { qubit, axis, param } => state.apply_rotation(qubit, axis, angles[param]),
        Op::Cnot { control, target } => state.apply_cnot(control, target),
    }
}

fn encoded_state(config: VqcConfig, encoding: &[f64]) -> Result<StateVector> {
    ensure_len("encoding angles", config.encoding_len(), encoding.len())?;
    let mut state = StateVector::zero(config.n_qubits)?;
    for q in 0..config.n_qubits {
        state.apply_rotation(q, Axis::Y, encoding[2 * q])?;
        state.apply_rotation(q, Axis::Z, encoding[2 * q + 1])?;
    }
    Ok(state)
}

/// Final statevector of the encoded ansatz.
pub fn prepare_state(params: &VqcParams, encoding: &[f64]) -> Result<StateVector> {
    let mut state = encoded_state(params.config, encoding)?;
    for op in ansatz_ops(params) {
        apply_op(&mut state, op, &params.angles)?;
    }
    Ok(state)
}

/// Pauli-Z expectations of every qubit, each in `[-1, 1]`.
pub fn run_circuit(params: &VqcParams, encoding: &[f64]) -> Result<Vec<f64>> {
    Ok(prepare_state(params, encoding)?.expectations_z())
}

/// Parameter-shift gradient of `Σ_i upstream_i·⟨Z_i⟩` with respect to every angle.
///
/// Each angle costs two shifted circuit evaluations at `±π/2`. Evaluations resume
/// from the cached state just before the shifted gate; the gates ahead of it are
/// unaffected by the shift.
pub fn param_shift_grad(params: &VqcParams, encoding: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    let n = params.config.n_qubits;
    ensure_len("parameter-shift upstream", n, upstream.len())?;
    let mut grad = vec![0.0; params.angles.len()];
    if upstream.iter().all(|&u| u == 0.0) {
        return Ok(grad);
    }

    let ops = ansatz_ops(params);
    let mut prefixes = Vec::with_capacity(ops.len());
    let mut state = encoded_state(params.config, encoding)?;
    for &op in &ops {
        prefixes.push(state.clone());
        apply_op(&mut state, op, &params.angles)?;
    }

    let mut shifted = params.angles.clone();
    for (pos, &op) in ops.iter().enumerate() {
        let Op::Rot { param, .. } = op else { continue };
        let mut eval = |delta: f64| -> Result<f64> {
            shifted[param] = params.angles[param] + delta;
            let mut s = prefixes[pos].clone();
            for &later in &ops[pos..] {
                apply_op(&mut s, later, &shifted)?;
            }
            shifted[param] = params.angles[param];
            Ok(s.expectations_z()
                .iter()
                .zip(upstream)
                .map(|(e, u)| e * u)
                .sum())
        };
        let plus = eval(FRAC_PI_2)?;
        let minus = eval(-FRAC_PI_2)?;
        grad[param] = 0.5 * (plus - minus);
    }
    Ok(grad)
}
