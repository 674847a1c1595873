//! Generalized advantage estimation.

use crate::error::{ensure_len, Result};

/// Advantages and returns for one environment's trajectory segment.
///
/// `δ_t = r_t + γ·V(s_{t+1})·(1 − done_t) − V(s_t)` with `V(s_{T}) = bootstrap`,
/// `Â_t = δ_t + γλ·(1 − done_t)·Â_{t+1}`, `R̂_t = Â_t + V(s_t)`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure_len("gae values", rewards.len(), values.len())?;
    ensure_len("gae dones", rewards.len(), dones.len())?;
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 == n { bootstrap } else { values[t + 1] };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Shifts to zero mean and scales to unit (population) standard deviation.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in advantages.iter_mut() {
        *a -= mean;
        if std > 1e-12 {
            *a /= std;
        }
    }
}
