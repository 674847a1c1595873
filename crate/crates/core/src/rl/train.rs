//! Training loop and the deterministic inference loop.

use std::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::env::{Environment, GuidanceEnv, GuidanceModels};
use super::ppo::{ppo_update, PpoConfig, PpoOptimizers, UpdateStats};
use super::reward::RewardConfig;
use super::rollout::{collect_rollouts, EnvSlot, RolloutBuffer};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::policy::{mean_action, Actor, Critic};
use crate::diffusion::PIXELS;

pub const LOG_COLUMNS: [&str; 7] = [
    "iteration",
    "mean_reward",
    "actor_loss",
    "critic_loss",
    "clip_fraction",
    "mean_abs_action",
    "mean_guidance",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub mean_reward: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub clip_fraction: f64,
    pub mean_abs_action: f64,
    pub mean_guidance: f64,
}

impl LogRow {
    pub fn values(&self) -> [f64; 6] {
        [
            self.mean_reward,
            self.actor_loss,
            self.critic_loss,
            self.clip_fraction,
            self.mean_abs_action,
            self.mean_guidance,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub actor: Actor,
    pub critic: Critic,
    /// Snapshot from the iteration with the highest mean rollout reward.
    pub best_actor: Actor,
    pub best_critic: Critic,
    pub best_iteration: usize,
    pub best_reward: f64,
    pub log: Vec<LogRow>,
}

/// Alternates rollout collection, GAE and PPO updates for up to `iterations`
/// rounds. `on_iteration` sees each log row with the buffer it came from and may
/// stop training early.
pub fn run_training<E: Environment + Send>(
    slots: &mut [EnvSlot<E>],
    mut actor: Actor,
    mut critic: Critic,
    config: &PpoConfig,
    iterations: usize,
    workers: usize,
    seed: u64,
    mut on_iteration: impl FnMut(&LogRow, &RolloutBuffer) -> ControlFlow<()>,
) -> Result<TrainingOutcome> {
    config.validate()?;
    if slots.len() != config.n_envs {
        return Err(Error::Config(format!(
            "{} environments supplied for n_envs = {}",
            slots.len(),
            config.n_envs
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut optimizers = PpoOptimizers::new(config);
    let mut log = Vec::with_capacity(iterations);
    let mut best = (actor.clone(), critic.clone(), 0usize, f64::NEG_INFINITY);

    for iteration in 0..iterations {
        let mut buffer = collect_rollouts(slots, &actor, &critic, config.horizon, workers)?;
        buffer.compute_advantages(config.gamma, config.gae_lambda)?;
        let mean_reward = buffer.mean_reward();
        if mean_reward > best.3 {
            best = (actor.clone(), critic.clone(), iteration, mean_reward);
        }
        let stats: UpdateStats =
            ppo_update(&buffer, &mut actor, &mut critic, &mut optimizers, config, &mut rng)?;
        let row = LogRow {
            iteration,
            mean_reward,
            actor_loss: stats.actor_loss,
            critic_loss: stats.critic_loss,
            clip_fraction: stats.clip_fraction,
            mean_abs_action: buffer.mean_abs_action(),
            mean_guidance: buffer.mean_guidance(),
        };
        log.push(row);
        if on_iteration(&row, &buffer).is_break() {
            break;
        }
    }

    let (best_actor, best_critic, best_iteration, best_reward) = best;
    Ok(TrainingOutcome {
        actor,
        critic,
        best_actor,
        best_critic,
        best_iteration,
        best_reward,
        log,
    })
}

/// Sampling-time guidance policy.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// `a_t = 0`, i.e. constant guidance `CFG₀`.
    Fixed,
    /// `a_t = clamp(μ(s_t), −2, 2)`.
    Learned(&'a Actor),
}

impl Controller<'_> {
    pub fn action(&self, state: &crate::Observation) -> Result<f64> {
        match self {
            Controller::Fixed => Ok(0.0),
            Controller::Learned(actor) => Ok(mean_action(actor.act(state)?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub t: usize,
    pub action: f64,
    pub guidance: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceTrace {
    pub label: usize,
    pub image: GrayImage,
    pub steps: Vec<TraceStep>,
    pub total_reward: f64,
}

/// Standard-normal initial latent drawn from `seed`.
pub fn initial_latent(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..PIXELS).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// One deterministic sampling episode under `controller`.
pub fn run_inference(
    controller: Controller<'_>,
    models: GuidanceModels<'_>,
    reward: &RewardConfig,
    label: usize,
    cfg0: f64,
    seed: u64,
) -> Result<InferenceTrace> {
    let mut env = GuidanceEnv::new(models, *reward, cfg0, seed)?;
    env.reset_with(label, initial_latent(seed))?;
    let mut steps = Vec::with_capacity(env.episode_len());
    let mut total_reward = 0.0;
    for step in 0..env.episode_len() {
        let t = env.current_t().expect("episode in progress");
        let state = env.observe()?;
        let action = controller.action(&state)?;
        let out = env.step(action)?;
        total_reward += out.reward;
        steps.push(TraceStep {
            step,
            t,
            action,
            guidance: out.guidance,
            reward: out.reward,
        });
    }
    Ok(InferenceTrace {
        label,
        image: env.image().expect("episode exists"),
        steps,
        total_reward,
    })
}

/// Mean episodic reward over `(label, seed)` episodes.
pub fn evaluate_controller(
    controller: Controller<'_>,
    models: GuidanceModels<'_>,
    reward: &RewardConfig,
    cfg0: f64,
    episodes: &[(usize, u64)],
) -> Result<f64> {
    if episodes.is_empty() {
        return Err(Error::Config("no evaluation episodes".into()));
    }
    let mut total = 0.0;
    for &(label, seed) in episodes {
        total += run_inference(controller, models, reward, label, cfg0, seed)?.total_reward;
    }
    Ok(total / episodes.len() as f64)
}
