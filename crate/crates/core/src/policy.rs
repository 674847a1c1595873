//! Actors, critic and the Gaussian action interface.
//!
//! Both actors map the 6-feature observation to `(μ, logσ)` of a Gaussian over
//! the guidance offset. The hybrid actor routes the observation through the
//! variational circuit and a small dense head; the classical actor is a plain
//! dense network of larger capacity.

use std::f64::consts::{E, PI};

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, DenseGrads, DenseNet, ParamBlock, Tape};
use crate::qsim::{self, VqcConfig, VqcParams};
use crate::{Observation, STATE_DIM};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
/// Actions are clamped to `[-ACTION_LIMIT, ACTION_LIMIT]`.
pub const ACTION_LIMIT: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOut {
    pub mean: f64,
    pub log_std: f64,
}

impl GaussianOut {
    pub fn std(&self) -> f64 {
        self.log_std.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAction {
    /// Clamped action handed to the environment.
    pub action: f64,
    /// Pre-clamp Gaussian sample; the density is evaluated here.
    pub raw: f64,
    pub log_prob: f64,
}

/// Reparameterized sample `μ + σ·noise`, clamped to the action range.
pub fn sample_action(out: GaussianOut, noise: f64) -> SampledAction {
    let raw = out.mean + out.std() * noise;
    SampledAction {
        action: raw.clamp(-ACTION_LIMIT, ACTION_LIMIT),
        raw,
        log_prob: log_prob(out, raw),
    }
}

pub fn log_prob(out: GaussianOut, action: f64) -> f64 {
    let z = (action - out.mean) / out.std();
    -HALF_LN_2PI - out.log_std - 0.5 * z * z
}

/// `½·ln(2πe) + logσ`.
pub fn entropy(out: GaussianOut) -> f64 {
    0.5 * (2.0 * PI * E).ln() + out.log_std
}

/// Deterministic action: the clamped mean.
pub fn mean_action(out: GaussianOut) -> f64 {
    out.mean.clamp(-ACTION_LIMIT, ACTION_LIMIT)
}

fn gaussian_from_raw(raw: &[f64]) -> GaussianOut {
    GaussianOut {
        mean: raw[0],
        log_std: raw[1].clamp(LOG_STD_MIN, LOG_STD_MAX),
    }
}

fn check_state(state: &Observation) -> Result<()> {
    match state.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("state feature {i}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridActor {
    pub vqc: VqcParams,
    pub head: DenseNet,
}

impl HybridActor {
    /// Circuit angles are uniform in `[-π, π)`; the head uses the dense-net initializer.
    pub fn new(config: VqcConfig, head_hidden: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut widths = vec![config.n_qubits];
        widths.extend_from_slice(head_hidden);
        widths.push(2);
        let head = DenseNet::new(&widths, Activation::Tanh, Activation::Identity, rng)?;
        let vqc = VqcParams::random(config, rng)?;
        Self::from_parts(vqc, head)
    }

    pub fn from_parts(vqc: VqcParams, head: DenseNet) -> Result<Self> {
        if head.in_width() != vqc.config().n_qubits || head.out_width() != 2 {
            return Err(Error::Config(format!(
                "head widths {:?} do not fit {} qubits -> (μ, logσ)",
                head.widths(),
                vqc.config().n_qubits
            )));
        }
        let slots = vqc.config().encoding_len();
        if slots < STATE_DIM {
            return Err(Error::Config(format!(
                "{} qubits give {slots} encoding slots, {STATE_DIM} are needed",
                vqc.config().n_qubits
            )));
        }
        Ok(Self { vqc, head })
    }

    pub fn param_count(&self) -> usize {
        self.vqc.angles().len() + self.head.param_count()
    }

    /// Pauli-Z features the head consumes.
    pub fn features(&self, state: &Observation) -> Result<(Vec<f64>, Vec<f64>)> {
        check_state(state)?;
        let encoding = qsim::encode_features(state, self.vqc.config().n_qubits)?;
        let q = qsim::run_circuit(&self.vqc, &encoding)?;
        Ok((encoding, q))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalActor {
    pub net: DenseNet,
}

impl ClassicalActor {
    pub fn new(hidden: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut widths = vec![STATE_DIM];
        widths.extend_from_slice(hidden);
        widths.push(2);
        Self::from_net(DenseNet::new(&widths, Activation::Tanh, Activation::Identity, rng)?)
    }

    pub fn from_net(net: DenseNet) -> Result<Self> {
        if net.in_width() != STATE_DIM || net.out_width() != 2 {
            return Err(Error::Config(format!(
                "classical actor widths {:?} must map {STATE_DIM} -> 2",
                net.widths()
            )));
        }
        Ok(Self { net })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Actor {
    Hybrid(HybridActor),
    Classical(ClassicalActor),
}

/// What [`Actor::backward`] needs from the matching forward pass.
#[derive(Debug, Clone)]
pub struct ActorTape {
    raw_log_std: f64,
    inner: TapeInner,
}

#[derive(Debug, Clone)]
enum TapeInner {
    Hybrid { encoding: Vec<f64>, head: Tape },
    Classical(Tape),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActorGrads {
    Hybrid { circuit: Vec<f64>, head: DenseGrads },
    Classical(DenseGrads),
}

impl ActorGrads {
    pub fn zeros_like(actor: &Actor) -> Self {
        match actor {
            Actor::Hybrid(h) => ActorGrads::Hybrid {
                circuit: vec![0.0; h.vqc.angles().len()],
                head: DenseGrads::zeros_like(&h.head),
            },
            Actor::Classical(c) => ActorGrads::Classical(DenseGrads::zeros_like(&c.net)),
        }
    }

    pub fn accumulate(&mut self, other: &ActorGrads) -> Result<()> {
        match (self, other) {
            (ActorGrads::Hybrid { circuit, head }, ActorGrads::Hybrid { circuit: c2, head: h2 }) => {
                for (a, b) in circuit.iter_mut().zip(c2) {
                    *a += b;
                }
                head.accumulate(h2);
                Ok(())
            }
            (ActorGrads::Classical(a), ActorGrads::Classical(b)) => {
                a.accumulate(b);
                Ok(())
            }
            _ => Err(Error::Config("mixing hybrid and classical gradients".into())),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        match self {
            ActorGrads::Hybrid { circuit, head } => {
                circuit.iter_mut().for_each(|g| *g *= factor);
                head.scale(factor);
            }
            ActorGrads::Classical(g) => g.scale(factor),
        }
    }

    /// Circuit angles first (hybrid), then dense parameters in layer order.
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            ActorGrads::Hybrid { circuit, head } => {
                circuit.iter().copied().chain(head.flatten()).collect()
            }
            ActorGrads::Classical(g) => g.flatten(),
        }
    }
}

impl Actor {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Actor::Hybrid(_) => "quantum",
            Actor::Classical(_) => "classical",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Actor::Hybrid(h) => h.param_count(),
            Actor::Classical(c) => c.net.param_count(),
        }
    }

    pub fn forward(&self, state: &Observation) -> Result<(GaussianOut, ActorTape)> {
        check_state(state)?;
        let (raw, inner) = match self {
            Actor::Hybrid(h) => {
                let (encoding, q) = h.features(state)?;
                let (raw, tape) = h.head.forward(&q)?;
                (raw, TapeInner::Hybrid { encoding, head: tape })
            }
            Actor::Classical(c) => {
                let (raw, tape) = c.net.forward(state)?;
                (raw, TapeInner::Classical(tape))
            }
        };
        if !raw.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("actor output".into()));
        }
        Ok((
            gaussian_from_raw(&raw),
            ActorTape {
                raw_log_std: raw[1],
                inner,
            },
        ))
    }

    /// Forward pass without a tape.
    pub fn act(&self, state: &Observation) -> Result<GaussianOut> {
        check_state(state)?;
        let raw = match self {
            Actor::Hybrid(h) => h.head.predict(&h.features(state)?.1)?,
            Actor::Classical(c) => c.net.predict(state)?,
        };
        if !raw.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("actor output".into()));
        }
        Ok(gaussian_from_raw(&raw))
    }

    /// Chain rule from `(∂L/∂μ, ∂L/∂logσ)` to every trainable parameter. The
    /// circuit part uses the parameter-shift rule with the head's input gradient
    /// as upstream. A clamped `logσ` passes no gradient.
    pub fn backward(&self, tape: &ActorTape, d_mean: f64, d_log_std: f64) -> Result<ActorGrads> {
        let d_log_std = if (LOG_STD_MIN..=LOG_STD_MAX).contains(&tape.raw_log_std) {
            d_log_std
        } else {
            0.0
        };
        let upstream = [d_mean, d_log_std];
        match (self, &tape.inner) {
            (Actor::Hybrid(h), TapeInner::Hybrid { encoding, head }) => {
                let head_grads = h.head.backward_vec(head, &upstream)?;
                let dq = head_grads.input.row(0).to_vec();
                let circuit = qsim::param_shift_grad(&h.vqc, encoding, &dq)?;
                Ok(ActorGrads::Hybrid {
                    circuit,
                    head: head_grads,
                })
            }
            (Actor::Classical(c), TapeInner::Classical(t)) => {
                Ok(ActorGrads::Classical(c.net.backward_vec(t, &upstream)?))
            }
            _ => Err(Error::StaleTape),
        }
    }

    pub fn apply_gradients(&mut self, grads: &ActorGrads, opt: &mut Adam) -> Result<()> {
        match (self, grads) {
            (Actor::Hybrid(h), ActorGrads::Hybrid { circuit, head }) => {
                let HybridActor { vqc, head: net } = h;
                let mut blocks = vec![ParamBlock {
                    name: "actor.vqc.angles".into(),
                    values: vqc.angles_mut(),
                    grad: circuit,
                }];
                blocks.extend(net.param_blocks(head, "actor.head.")?);
                opt.step(blocks)
            }
            (Actor::Classical(c), ActorGrads::Classical(g)) => {
                opt.step(c.net.param_blocks(g, "actor.")?)
            }
            _ => Err(Error::Config("gradient kind does not match actor".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: DenseNet,
}

impl Critic {
    pub fn new(hidden: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut widths = vec![STATE_DIM];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Self::from_net(DenseNet::new(&widths, Activation::Tanh, Activation::Identity, rng)?)
    }

    pub fn from_net(net: DenseNet) -> Result<Self> {
        if net.in_width() != STATE_DIM || net.out_width() != 1 {
            return Err(Error::Config(format!(
                "critic widths {:?} must map {STATE_DIM} -> 1",
                net.widths()
            )));
        }
        Ok(Self { net })
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn forward(&self, state: &Observation) -> Result<(f64, Tape)> {
        check_state(state)?;
        let (out, tape) = self.net.forward(state)?;
        Ok((out[0], tape))
    }

    pub fn value(&self, state: &Observation) -> Result<f64> {
        check_state(state)?;
        let v = self.net.predict(state)?[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("critic value".into()))
        }
    }

    pub fn backward(&self, tape: &Tape, d_value: f64) -> Result<DenseGrads> {
        self.net.backward_vec(tape, &[d_value])
    }

    pub fn apply_gradients(&mut self, grads: &DenseGrads, opt: &mut Adam) -> Result<()> {
        opt.step(self.net.param_blocks(grads, "critic.")?)
    }
}
