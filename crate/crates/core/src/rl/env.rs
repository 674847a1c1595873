//! Environments the controller acts in.
//!
//! [`GuidanceEnv`] is one DDIM sampling episode: each step the controller picks
//! a guidance offset, the sampler applies the guided update, and the reward
//! scores the resulting clean estimate. [`DiagnosticEnv`] replaces the sampler
//! with a quadratic reward around a hidden guidance target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::reward::{compute_reward, RewardBreakdown, RewardConfig};
use crate::diffusion::schedule::{ddim_update, predict_x0_at};
use crate::diffusion::{
    build_state, cfg_combine, clip_guidance, Denoiser, NoiseSchedule, ProxyClassifier, IMAGE_SIDE,
    NUM_CLASSES, PIXELS,
};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::Observation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    /// Guidance scale actually applied, `clip(CFG₀ + a, 1, 12)`.
    pub guidance: f64,
    pub done: bool,
}

pub trait Environment {
    /// Starts a fresh episode.
    fn reset(&mut self) -> Result<()>;
    fn observe(&mut self) -> Result<Observation>;
    /// Applies an action that is already clamped to the action range.
    fn step(&mut self, action: f64) -> Result<StepOutcome>;
    fn episode_len(&self) -> usize;
}

/// Frozen models shared by every guidance environment.
#[derive(Debug, Clone, Copy)]
pub struct GuidanceModels<'a> {
    pub schedule: &'a NoiseSchedule,
    pub denoiser: &'a Denoiser,
    pub classifier: &'a ProxyClassifier,
}

#[derive(Debug, Clone)]
struct Episode {
    label: usize,
    z: Vec<f64>,
    step: usize,
    a_prev: f64,
    /// Noise estimate and clean estimate that feed the next observation.
    eps_state: Option<Vec<f64>>,
    x0_state: Option<Vec<f64>>,
    prev_x0: Option<GrayImage>,
    /// `(ε_uncond, ε_cond)` at the current latent, shared by observe and step.
    pair: Option<(Vec<f64>, Vec<f64>)>,
    last: Option<RewardBreakdown>,
}

#[derive(Debug, Clone)]
pub struct GuidanceEnv<'a> {
    models: GuidanceModels<'a>,
    reward: RewardConfig,
    cfg0: f64,
    rng: ChaCha8Rng,
    pairs: Vec<(usize, usize)>,
    episode: Option<Episode>,
}

impl<'a> GuidanceEnv<'a> {
    pub fn new(models: GuidanceModels<'a>, reward: RewardConfig, cfg0: f64, seed: u64) -> Result<Self> {
        reward.validate()?;
        if !cfg0.is_finite() {
            return Err(Error::Config(format!("CFG₀ must be finite, got {cfg0}")));
        }
        Ok(Self {
            pairs: models.schedule.sampling_pairs(),
            models,
            reward,
            cfg0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            episode: None,
        })
    }

    /// Starts an episode with a given label and initial latent.
    pub fn reset_with(&mut self, label: usize, latent: Vec<f64>) -> Result<()> {
        if label >= NUM_CLASSES {
            return Err(Error::Config(format!("label {label} out of range")));
        }
        crate::error::ensure_len("initial latent", PIXELS, latent.len())?;
        self.episode = Some(Episode {
            label,
            z: latent,
            step: 0,
            a_prev: 0.0,
            eps_state: None,
            x0_state: None,
            prev_x0: None,
            pair: None,
            last: None,
        });
        Ok(())
    }

    pub fn label(&self) -> Option<usize> {
        self.episode.as_ref().map(|e| e.label)
    }

    /// Current latent; after the last step this is the decoded image.
    pub fn latent(&self) -> Option<&[f64]> {
        self.episode.as_ref().map(|e| e.z.as_slice())
    }

    pub fn image(&self) -> Option<GrayImage> {
        self.latent()
            .map(|z| GrayImage::new(IMAGE_SIDE, IMAGE_SIDE, z.to_vec()).expect("fixed size"))
    }

    /// Reward terms of the most recent step.
    pub fn last_reward(&self) -> Option<RewardBreakdown> {
        self.episode.as_ref().and_then(|e| e.last)
    }

    /// Diffusion timestep the next step starts from.
    pub fn current_t(&self) -> Option<usize> {
        let ep = self.episode.as_ref()?;
        self.pairs.get(ep.step).map(|p| p.0)
    }

    fn ensure_pair(&mut self) -> Result<()> {
        let ep = self.episode.as_mut().ok_or_else(no_episode)?;
        let (t, _) = *self.pairs.get(ep.step).ok_or_else(episode_over)?;
        if ep.pair.is_none() {
            ep.pair = Some(self.models.denoiser.predict_pair(&ep.z, t, ep.label)?);
        }
        Ok(())
    }
}

fn no_episode() -> Error {
    Error::Config("environment used before reset".into())
}

fn episode_over() -> Error {
    Error::Config("episode already finished; reset first".into())
}

impl Environment for GuidanceEnv<'_> {
    fn reset(&mut self) -> Result<()> {
        let label = self.rng.random_range(0..NUM_CLASSES);
        let latent = (0..PIXELS).map(|_| self.rng.sample(StandardNormal)).collect();
        self.reset_with(label, latent)
    }

    /// Before the first step the state uses the unconditional prediction at
    /// the initial latent; afterwards, the guided estimate of the previous step.
    fn observe(&mut self) -> Result<Observation> {
        self.ensure_pair()?;
        let s = self.models.schedule;
        let ep = self.episode.as_mut().expect("checked by ensure_pair");
        let (t, _) = self.pairs[ep.step];
        if ep.eps_state.is_none() {
            let (uncond, _) = ep.pair.as_ref().expect("filled");
            ep.x0_state = Some(predict_x0_at(s.alpha_bar(t)?, &ep.z, uncond, true)?);
            ep.eps_state = Some(uncond.clone());
        }
        let x0 = ep.x0_state.as_ref().expect("filled");
        let p = self.models.classifier.classify(x0)?[ep.label];
        build_state(
            ep.step,
            self.pairs.len(),
            &ep.z,
            ep.eps_state.as_ref().expect("filled"),
            ep.a_prev,
            p,
        )
    }

    fn step(&mut self, action: f64) -> Result<StepOutcome> {
        if !action.is_finite() {
            return Err(Error::NonFinite("action".into()));
        }
        self.ensure_pair()?;
        let s = self.models.schedule;
        let ep = self.episode.as_mut().expect("checked by ensure_pair");
        let (t, t_prev) = self.pairs[ep.step];
        let guidance = clip_guidance(self.cfg0, action);
        let (uncond, cond) = ep.pair.take().expect("filled");
        let eps = cfg_combine(&uncond, &cond, guidance)?;
        let (ab_t, ab_prev) = (s.alpha_bar(t)?, s.alpha_bar(t_prev)?);
        let x0 = predict_x0_at(ab_t, &ep.z, &eps, true)?;
        let x0_img = GrayImage::new(IMAGE_SIDE, IMAGE_SIDE, x0.clone())?;
        let reward = compute_reward(
            &x0_img,
            ep.prev_x0.as_ref(),
            action,
            ep.label,
            self.models.classifier,
            &self.reward,
        )?;
        if !reward.total.is_finite() {
            return Err(Error::NonFinite("reward".into()));
        }
        ep.z = ddim_update(ab_t, ab_prev, &ep.z, &eps, true)?;
        ep.eps_state = Some(eps);
        ep.x0_state = Some(x0);
        ep.prev_x0 = Some(x0_img);
        ep.a_prev = action;
        ep.step += 1;
        ep.last = Some(reward);
        Ok(StepOutcome {
            reward: reward.total,
            guidance,
            done: ep.step == self.pairs.len(),
        })
    }

    fn episode_len(&self) -> usize {
        self.pairs.len()
    }
}

/// Synthetic environment with reward `−(g − g*)²` and no sampler.
///
/// The observation is `[k/S, 0, 0, 0, a_prev, 0]`, so a policy that learns the
/// constant offset `g* − CFG₀` maximizes return.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticEnv {
    cfg0: f64,
    target: f64,
    episode_len: usize,
    step: usize,
    a_prev: f64,
}

impl DiagnosticEnv {
    pub fn new(cfg0: f64, target: f64, episode_len: usize) -> Result<Self> {
        if episode_len == 0 || !cfg0.is_finite() || !target.is_finite() {
            return Err(Error::Config(
                "diagnostic env needs a positive episode length and finite guidance values".into(),
            ));
        }
        Ok(Self {
            cfg0,
            target,
            episode_len,
            step: 0,
            a_prev: 0.0,
        })
    }

    pub fn target(&self) -> f64 {
        self.target
    }
}

impl Environment for DiagnosticEnv {
    fn reset(&mut self) -> Result<()> {
        self.step = 0;
        self.a_prev = 0.0;
        Ok(())
    }

    fn observe(&mut self) -> Result<Observation> {
        Ok([
            self.step as f64 / self.episode_len as f64,
            0.0,
            0.0,
            0.0,
            self.a_prev,
            0.0,
        ])
    }

    fn step(&mut self, action: f64) -> Result<StepOutcome> {
        if self.step >= self.episode_len {
            return Err(episode_over());
        }
        let guidance = clip_guidance(self.cfg0, action);
        self.step += 1;
        self.a_prev = action;
        Ok(StepOutcome {
            reward: -(guidance - self.target).powi(2),
            guidance,
            done: self.step == self.episode_len,
        })
    }

    fn episode_len(&self) -> usize {
        self.episode_len
    }
}
