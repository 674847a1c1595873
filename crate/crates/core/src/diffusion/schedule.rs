//! Linear-β noise schedule and the deterministic DDIM update.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub t_train: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub t_sample: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            t_train: 200,
            beta_start: 1e-4,
            beta_end: 0.02,
            t_sample: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    config: ScheduleConfig,
    betas: Vec<f64>,
    /// `ᾱ_t` for `t = 0..=T`, with `ᾱ_0 = 1`.
    alpha_bars: Vec<f64>,
    /// Sampling subsequence in ascending order, `τ_1 < … < τ_S = T`.
    timesteps: Vec<usize>,
}

impl NoiseSchedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        let ScheduleConfig {
            t_train,
            beta_start,
            beta_end,
            t_sample,
        } = config;
        if t_train == 0 || t_sample == 0 || t_sample > t_train {
            return Err(Error::Config(format!(
                "need 1 <= t_sample ({t_sample}) <= t_train ({t_train})"
            )));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_start ({beta_start}) <= beta_end ({beta_end}) < 1"
            )));
        }
        let betas: Vec<f64> = (0..t_train)
            .map(|i| {
                if t_train == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (t_train - 1) as f64
                }
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(t_train + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        let timesteps = (1..=t_sample).map(|k| k * t_train / t_sample).collect();
        Ok(Self {
            config,
            betas,
            alpha_bars,
            timesteps,
        })
    }

    pub fn config(&self) -> ScheduleConfig {
        self.config
    }

    pub fn t_train(&self) -> usize {
        self.config.t_train
    }

    pub fn t_sample(&self) -> usize {
        self.config.t_sample
    }

    /// `β_t` for `t = 1..=T`.
    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check_train_step(t)?;
        Ok(self.betas[t - 1])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars
            .get(t)
            .copied()
            .ok_or(Error::TimestepOutOfRange {
                t,
                t_max: self.config.t_train,
            })
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    /// `(t, t_prev)` pairs in sampling order, ending with `t_prev = 0`.
    pub fn sampling_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.timesteps.len())
            .rev()
            .map(|k| {
                let prev = if k == 0 { 0 } else { self.timesteps[k - 1] };
                (self.timesteps[k], prev)
            })
            .collect()
    }

    /// `x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε` for `t ∈ [1, T]`.
    pub fn q_sample(&self, x0: &[f64], t: usize, noise: &[f64]) -> Result<Vec<f64>> {
        self.check_train_step(t)?;
        q_sample_at(self.alpha_bars[t], x0, noise)
    }

    /// Clean-image estimate, clamped to `[-1, 1]`.
    pub fn predict_x0(&self, x_t: &[f64], eps: &[f64], t: usize) -> Result<Vec<f64>> {
        predict_x0_at(self.alpha_bar(t)?, x_t, eps, true)
    }

    pub fn ddim_step(&self, x_t: &[f64], eps: &[f64], t: usize, t_prev: usize) -> Result<Vec<f64>> {
        self.ddim_step_with(x_t, eps, t, t_prev, true)
    }

    /// DDIM (η = 0) update from `t` to `t_prev`; `clamp` bounds the intermediate x̂0.
    pub fn ddim_step_with(
        &self,
        x_t: &[f64],
        eps: &[f64],
        t: usize,
        t_prev: usize,
        clamp: bool,
    ) -> Result<Vec<f64>> {
        if t_prev >= t {
            return Err(Error::ScheduleOrder { t, t_prev });
        }
        let ab_t = self.alpha_bar(t)?;
        let ab_prev = self.alpha_bar(t_prev)?;
        ddim_update(ab_t, ab_prev, x_t, eps, clamp)
    }

    fn check_train_step(&self, t: usize) -> Result<()> {
        if (1..=self.config.t_train).contains(&t) {
            Ok(())
        } else {
            Err(Error::TimestepOutOfRange {
                t,
                t_max: self.config.t_train,
            })
        }
    }
}

pub fn q_sample_at(alpha_bar: f64, x0: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    ensure_len("q_sample noise", x0.len(), noise.len())?;
    let (a, s) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    Ok(x0.iter().zip(noise).map(|(x, e)| a * x + s * e).collect())
}

pub fn predict_x0_at(alpha_bar: f64, x_t: &[f64], eps: &[f64], clamp: bool) -> Result<Vec<f64>> {
    ensure_len("predict_x0 noise", x_t.len(), eps.len())?;
    if alpha_bar <= 0.0 {
        return Err(Error::Config(format!("ᾱ = {alpha_bar} must be positive")));
    }
    let (a, s) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    Ok(x_t
        .iter()
        .zip(eps)
        .map(|(x, e)| {
            let v = (x - s * e) / a;
            if clamp {
                v.clamp(-1.0, 1.0)
            } else {
                v
            }
        })
        .collect())
}

pub fn ddim_update(
    alpha_bar_t: f64,
    alpha_bar_prev: f64,
    x_t: &[f64],
    eps: &[f64],
    clamp: bool,
) -> Result<Vec<f64>> {
    let x0 = predict_x0_at(alpha_bar_t, x_t, eps, clamp)?;
    let (a, s) = (alpha_bar_prev.sqrt(), (1.0 - alpha_bar_prev).sqrt());
    // The direction term uses the noise implied by the clamped x̂0. Under strong
    // guidance ε̂ overshoots, and pairing it with a clamped x̂0 pushes the latent
    // off the noise manifold. Without clamping the two coincide.
    let (a_t, s_t) = (alpha_bar_t.sqrt(), (1.0 - alpha_bar_t).sqrt());
    if !clamp || s_t == 0.0 {
        return Ok(x0.iter().zip(eps).map(|(x, e)| a * x + s * e).collect());
    }
    Ok(x0
        .iter()
        .zip(x_t)
        .map(|(x, z)| a * x + s * (z - a_t * x) / s_t)
        .collect())
}
