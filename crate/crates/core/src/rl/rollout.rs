//! Rollout collection across a set of environments.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::env::Environment;
use super::gae::{gae, normalize_advantages};
use crate::error::{Error, Result};
use crate::policy::{sample_action, Actor, Critic};
use crate::Observation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: Observation,
    /// Clamped action applied to the environment.
    pub action: f64,
    /// Pre-clamp sample the log-density refers to.
    pub raw_action: f64,
    pub reward: f64,
    pub log_prob: f64,
    pub value: f64,
    pub guidance: f64,
    pub done: bool,
}

/// An environment together with the generator that drives its policy noise.
#[derive(Debug, Clone)]
pub struct EnvSlot<E> {
    pub env: E,
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    /// `trajectories[env][step]`.
    pub trajectories: Vec<Vec<Transition>>,
    /// Critic value of the observation following each env's last transition.
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.trajectories.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> + '_ {
        self.trajectories.iter().flatten()
    }

    /// Fills `advantages` and `returns` from GAE on each trajectory.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        self.advantages.clear();
        self.returns.clear();
        for (traj, &boot) in self.trajectories.iter().zip(&self.bootstrap) {
            let rewards: Vec<f64> = traj.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = traj.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = traj.iter().map(|t| t.done).collect();
            let (adv, ret) = gae(&rewards, &values, &dones, boot, gamma, lambda)?;
            self.advantages.push(adv);
            self.returns.push(ret);
        }
        Ok(())
    }

    /// Advantages flattened in env-major order and normalized over the batch.
    pub fn normalized_advantages(&self) -> Vec<f64> {
        let mut flat: Vec<f64> = self.advantages.iter().flatten().copied().collect();
        normalize_advantages(&mut flat);
        flat
    }

    pub fn mean_reward(&self) -> f64 {
        mean(self.transitions().map(|t| t.reward))
    }

    pub fn mean_abs_action(&self) -> f64 {
        mean(self.transitions().map(|t| t.action.abs()))
    }

    pub fn mean_guidance(&self) -> f64 {
        mean(self.transitions().map(|t| t.guidance))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Resets every env, then steps each for `horizon` transitions, resetting after
/// every finished episode. Work is split into contiguous env chunks across
/// `workers` threads and merged in env order, so the result does not depend on
/// the worker count.
pub fn collect_rollouts<E: Environment + Send>(
    slots: &mut [EnvSlot<E>],
    actor: &Actor,
    critic: &Critic,
    horizon: usize,
    workers: usize,
) -> Result<RolloutBuffer> {
    let n = slots.len();
    let workers = workers.clamp(1, n.max(1));
    let results: Vec<Result<(Vec<Transition>, f64)>> = if workers == 1 {
        slots
            .iter_mut()
            .enumerate()
            .map(|(i, slot)| run_env(i, slot, actor, critic, horizon))
            .collect()
    } else {
        let chunk = n.div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = slots
                .chunks_mut(chunk)
                .enumerate()
                .map(|(c, part)| {
                    scope.spawn(move || {
                        part.iter_mut()
                            .enumerate()
                            .map(|(j, slot)| run_env(c * chunk + j, slot, actor, critic, horizon))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("rollout worker panicked"))
                .collect()
        })
    };

    let mut buffer = RolloutBuffer::default();
    for r in results {
        let (traj, boot) = r?;
        buffer.trajectories.push(traj);
        buffer.bootstrap.push(boot);
    }
    Ok(buffer)
}

fn run_env<E: Environment>(
    index: usize,
    slot: &mut EnvSlot<E>,
    actor: &Actor,
    critic: &Critic,
    horizon: usize,
) -> Result<(Vec<Transition>, f64)> {
    let fail = |step: usize, e: Error| Error::Rollout {
        env: index,
        step,
        reason: e.to_string(),
    };
    slot.env.reset().map_err(|e| fail(0, e))?;
    let mut traj = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let state = slot.env.observe().map_err(|e| fail(step, e))?;
        let out = actor.act(&state).map_err(|e| fail(step, e))?;
        let value = critic.value(&state).map_err(|e| fail(step, e))?;
        let noise: f64 = slot.rng.sample(StandardNormal);
        let sample = sample_action(out, noise);
        let outcome = slot.env.step(sample.action).map_err(|e| fail(step, e))?;
        if !outcome.reward.is_finite() || !sample.log_prob.is_finite() {
            return Err(fail(step, Error::NonFinite("reward or log-probability".into())));
        }
        traj.push(Transition {
            state,
            action: sample.action,
            raw_action: sample.raw,
            reward: outcome.reward,
            log_prob: sample.log_prob,
            value,
            guidance: outcome.guidance,
            done: outcome.done,
        });
        if outcome.done {
            slot.env.reset().map_err(|e| fail(step, e))?;
        }
    }
    let last = slot.env.observe().map_err(|e| fail(horizon, e))?;
    let bootstrap = critic.value(&last).map_err(|e| fail(horizon, e))?;
    Ok((traj, bootstrap))
}
