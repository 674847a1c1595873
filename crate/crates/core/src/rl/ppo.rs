//! Clipped-surrogate PPO update.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rollout::{RolloutBuffer, Transition};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, DenseGrads};
use crate::policy::{entropy, log_prob, Actor, ActorGrads, Critic};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub n_envs: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.1,
            entropy_coef: 0.01,
            value_coef: 0.5,
            gamma: 0.99,
            gae_lambda: 0.95,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            n_envs: 8,
            horizon: 512,
            epochs: 4,
            minibatch_size: 8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return fail(format!("clip_eps must be in (0, 1), got {}", self.clip_eps));
        }
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(v > 0.0 && v <= 1.0) {
                return fail(format!("{name} must be in (0, 1], got {v}"));
            }
        }
        for (name, v) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return fail("entropy and value coefficients must be >= 0".into());
        }
        if self.n_envs == 0 || self.horizon == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            return fail("n_envs, horizon, epochs and minibatch_size must be positive".into());
        }
        if (self.n_envs * self.horizon) % self.minibatch_size != 0 {
            return fail(format!(
                "batch of {} transitions does not split into minibatches of {}",
                self.n_envs * self.horizon,
                self.minibatch_size
            ));
        }
        Ok(())
    }
}

/// Optimizer state for actor and critic, kept across iterations.
#[derive(Debug, Clone)]
pub struct PpoOptimizers {
    pub actor: Adam,
    pub critic: Adam,
}

impl PpoOptimizers {
    pub fn new(config: &PpoConfig) -> Self {
        Self {
            actor: Adam::new(AdamConfig::with_lr(config.actor_lr)),
            critic: Adam::new(AdamConfig::with_lr(config.critic_lr)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    /// Fraction of samples with `|ρ − 1| > ε`.
    pub clip_fraction: f64,
    /// Mean of `logπ_old − logπ_new`.
    pub approx_kl: f64,
    pub minibatches: usize,
}

/// Unclipped and clipped surrogate terms `(ρÂ, clip(ρ, 1−ε, 1+ε)Â)`.
pub fn surrogate_terms(ratio: f64, advantage: f64, clip_eps: f64) -> (f64, f64) {
    (
        ratio * advantage,
        ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage,
    )
}

/// Per-sample `(ρ, unclipped, clipped)` under the current actor, with batch-normalized advantages.
pub fn surrogate_table(
    buffer: &RolloutBuffer,
    actor: &Actor,
    clip_eps: f64,
) -> Result<Vec<(f64, f64, f64)>> {
    let adv = buffer.normalized_advantages();
    buffer
        .transitions()
        .zip(adv)
        .map(|(tr, a)| {
            let out = actor.act(&tr.state)?;
            let ratio = (log_prob(out, tr.raw_action) - tr.log_prob).exp();
            let (u, c) = surrogate_terms(ratio, a, clip_eps);
            Ok((ratio, u, c))
        })
        .collect()
}

/// `K` epochs of shuffled minibatch updates. Advantages must already be in the buffer.
pub fn ppo_update(
    buffer: &RolloutBuffer,
    actor: &mut Actor,
    critic: &mut Critic,
    optimizers: &mut PpoOptimizers,
    config: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    if buffer.advantages.len() != buffer.trajectories.len() {
        return Err(Error::Config("advantages have not been computed".into()));
    }
    let samples: Vec<&Transition> = buffer.transitions().collect();
    let advantages = buffer.normalized_advantages();
    let returns: Vec<f64> = buffer.returns.iter().flatten().copied().collect();
    if samples.is_empty() {
        return Err(Error::Config("empty rollout buffer".into()));
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut stats = UpdateStats::default();
    let mut clipped = 0usize;
    let mut seen = 0usize;
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        for (mb, chunk) in order.chunks(config.minibatch_size).enumerate() {
            let b = chunk.len() as f64;
            let mut actor_grads = ActorGrads::zeros_like(actor);
            let mut critic_grads = DenseGrads::zeros_like(&critic.net);
            let (mut surrogate, mut ent, mut value_loss, mut kl) = (0.0, 0.0, 0.0, 0.0);
            for &i in chunk {
                let tr = samples[i];
                let adv = advantages[i];
                let (out, tape) = actor.forward(&tr.state)?;
                let logp = log_prob(out, tr.raw_action);
                let ratio = (logp - tr.log_prob).exp();
                let (unclipped, clipped_term) = surrogate_terms(ratio, adv, config.clip_eps);
                surrogate += unclipped.min(clipped_term);
                ent += entropy(out);
                kl += tr.log_prob - logp;
                if (ratio - 1.0).abs() > config.clip_eps {
                    clipped += 1;
                }

                // Gradient flows through ρ only when the unclipped branch is the minimum.
                let d_logp = if unclipped <= clipped_term { -ratio * adv / b } else { 0.0 };
                let sigma2 = (2.0 * out.log_std).exp();
                let diff = tr.raw_action - out.mean;
                let d_mean = d_logp * diff / sigma2;
                let d_log_std = d_logp * (diff * diff / sigma2 - 1.0) - config.entropy_coef / b;
                actor_grads.accumulate(&actor.backward(&tape, d_mean, d_log_std)?)?;

                let (v, vtape) = critic.forward(&tr.state)?;
                let err = v - returns[i];
                value_loss += err * err;
                critic_grads.accumulate(&critic.backward(&vtape, config.value_coef * 2.0 * err / b)?);
            }
            let actor_loss = -surrogate / b - config.entropy_coef * ent / b;
            let critic_loss = config.value_coef * value_loss / b;
            if !actor_loss.is_finite() || !critic_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss in minibatch {mb} of epoch {epoch} \
                     (actor {actor_loss}, critic {critic_loss})"
                )));
            }
            actor.apply_gradients(&actor_grads, &mut optimizers.actor)?;
            critic.apply_gradients(&critic_grads, &mut optimizers.critic)?;

            stats.actor_loss += actor_loss;
            stats.critic_loss += critic_loss;
            stats.entropy += ent / b;
            stats.approx_kl += kl;
            stats.minibatches += 1;
            seen += chunk.len();
        }
    }
    let m = stats.minibatches as f64;
    stats.actor_loss /= m;
    stats.critic_loss /= m;
    stats.entropy /= m;
    stats.approx_kl /= seen as f64;
    stats.clip_fraction = clipped as f64 / seen as f64;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::env::DiagnosticEnv;
    use crate::rl::rollout::{collect_rollouts, EnvSlot};
    use rand::SeedableRng;

    #[test]
    fn clip_semantics() {
        let (u, c) = surrogate_terms(1.5, 2.0, 0.1);
        assert_eq!(u, 3.0);
        assert!((c - 2.2).abs() < 1e-15);
        assert_eq!(u.min(c), c);
        let (u, c) = surrogate_terms(1.0, -0.7, 0.1);
        assert_eq!(u, c);
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        let bad = PpoConfig { minibatch_size: 7, ..PpoConfig::default() };
        assert!(bad.validate().is_err());
        let bad = PpoConfig { clip_eps: 1.0, ..PpoConfig::default() };
        assert!(bad.validate().is_err());
        let bad = PpoConfig { gamma: 0.0, ..PpoConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn update_runs_and_changes_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut actor =
            Actor::Classical(crate::policy::ClassicalActor::new(&[16], &mut rng).unwrap());
        let mut critic = Critic::new(&[16], &mut rng).unwrap();
        let mut slots: Vec<_> = (0..2)
            .map(|i| EnvSlot {
                env: DiagnosticEnv::new(5.0, 8.0, 10).unwrap(),
                rng: ChaCha8Rng::seed_from_u64(i),
            })
            .collect();
        let mut buf = collect_rollouts(&mut slots, &actor, &critic, 32, 1).unwrap();
        buf.compute_advantages(0.99, 0.95).unwrap();
        let config = PpoConfig { n_envs: 2, horizon: 32, ..PpoConfig::default() };
        let before = actor.clone();
        let mut opts = PpoOptimizers::new(&config);
        let stats = ppo_update(&buf, &mut actor, &mut critic, &mut opts, &config, &mut rng).unwrap();
        assert_eq!(stats.minibatches, 4 * 8);
        assert!(stats.actor_loss.is_finite() && stats.critic_loss.is_finite());
        assert_ne!(actor, before);
    }
}
