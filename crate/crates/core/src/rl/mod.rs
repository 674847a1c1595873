//! Guidance-control reinforcement learning: reward, environments, rollouts, GAE and PPO.

pub mod env;
pub mod gae;
pub mod ppo;
pub mod reward;
pub mod rollout;
pub mod train;

pub use env::{DiagnosticEnv, Environment, GuidanceEnv, GuidanceModels, StepOutcome};
pub use gae::{gae, normalize_advantages};
pub use ppo::{ppo_update, surrogate_terms, PpoConfig, PpoOptimizers, UpdateStats};
pub use reward::{combine_reward, compute_reward, RewardBreakdown, RewardConfig};
pub use rollout::{collect_rollouts, EnvSlot, RolloutBuffer, Transition};
pub use train::{
    evaluate_controller, initial_latent, run_inference, run_training, Controller, InferenceTrace,
    LogRow, TraceStep, TrainingOutcome, LOG_COLUMNS,
};
