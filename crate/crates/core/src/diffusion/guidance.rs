//! Classifier-free guidance and the controller's observation features.

use crate::error::{ensure_len, Error, Result};
use crate::Observation;

pub const GUIDANCE_MIN: f64 = 1.0;
pub const GUIDANCE_MAX: f64 = 12.0;

/// `ε̂ = ε_uncond + g·(ε_cond − ε_uncond)`.
pub fn cfg_combine(eps_uncond: &[f64], eps_cond: &[f64], g: f64) -> Result<Vec<f64>> {
    ensure_len("cfg_combine", eps_uncond.len(), eps_cond.len())?;
    Ok(eps_uncond
        .iter()
        .zip(eps_cond)
        .map(|(u, c)| u + g * (c - u))
        .collect())
}

/// `clip(CFG₀ + a, 1, 12)`.
pub fn clip_guidance(cfg0: f64, action: f64) -> f64 {
    (cfg0 + action).clamp(GUIDANCE_MIN, GUIDANCE_MAX)
}

/// `[k/S, ‖z‖/√D, ‖ε̂‖/√D, ⟨z, ε̂⟩/D, a_prev, p_proxy]` for step `k` of `S`.
pub fn build_state(
    step: usize,
    t_sample: usize,
    z: &[f64],
    eps_hat: &[f64],
    a_prev: f64,
    p_proxy: f64,
) -> Result<Observation> {
    ensure_len("state noise estimate", z.len(), eps_hat.len())?;
    if t_sample == 0 || z.is_empty() {
        return Err(Error::Config("state needs t_sample > 0 and a non-empty image".into()));
    }
    let d = z.len() as f64;
    let z_norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let e_norm = eps_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dot: f64 = z.iter().zip(eps_hat).map(|(a, b)| a * b).sum();
    let state = [
        step as f64 / t_sample as f64,
        z_norm / d.sqrt(),
        e_norm / d.sqrt(),
        dot / d,
        a_prev,
        p_proxy,
    ];
    match state.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("state feature {i}"))),
        None => Ok(state),
    }
}
