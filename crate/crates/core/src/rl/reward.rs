//! Per-step reward: classifier confidence, estimate stability, action and TV penalties.

use serde::{Deserialize, Serialize};

use crate::diffusion::ProxyClassifier;
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::metrics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Weight of the proxy-classifier confidence.
    pub alpha: f64,
    /// Weight of the stepwise quality term.
    pub beta: f64,
    pub lambda_act: f64,
    pub lambda_tv: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.2,
            lambda_act: 5e-3,
            lambda_tv: 0.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha, self.beta, self.lambda_act, self.lambda_tv];
        if w.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("reward weights must be >= 0, got {w:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub total: f64,
    /// `p_proxy(label | x̂0_t)`.
    pub cls: f64,
    /// SSIM between consecutive clean estimates (0 on the first step).
    pub step: f64,
    pub tv: f64,
}

/// `α·R_cls + β·R_step − λ_act·a² − λ_tv·TV`.
pub fn combine_reward(cls: f64, step: f64, action: f64, tv: f64, config: &RewardConfig) -> f64 {
    config.alpha * cls + config.beta * step - config.lambda_act * action * action
        - config.lambda_tv * tv
}

pub fn compute_reward(
    x0_t: &GrayImage,
    x0_prev: Option<&GrayImage>,
    action: f64,
    label: usize,
    classifier: &ProxyClassifier,
    config: &RewardConfig,
) -> Result<RewardBreakdown> {
    let probs = classifier.classify_image(x0_t)?;
    let cls = *probs
        .get(label)
        .ok_or_else(|| Error::Config(format!("label {label} out of range")))?;
    let step = match x0_prev {
        Some(prev) => metrics::ssim(x0_t, prev)?,
        None => 0.0,
    };
    let tv = metrics::tv(x0_t);
    Ok(RewardBreakdown {
        total: combine_reward(cls, step, action, tv, config),
        cls,
        step,
        tv,
    })
}
