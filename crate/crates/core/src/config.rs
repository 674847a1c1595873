//! Run configuration: a single JSON document covering every stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::{ClassifierConfig, DenoiserConfig, NoiseSchedule, ScheduleConfig, GUIDANCE_MAX, GUIDANCE_MIN};
use crate::error::{Error, Result};
use crate::qsim::VqcConfig;
use crate::rl::{PpoConfig, RewardConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorKind {
    Quantum,
    Classical,
    Fixed,
}

impl ActorKind {
    pub fn name(self) -> &'static str {
        match self {
            ActorKind::Quantum => "quantum",
            ActorKind::Classical => "classical",
            ActorKind::Fixed => "fixed",
        }
    }
}

impl std::str::FromStr for ActorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum" => Ok(ActorKind::Quantum),
            "classical" => Ok(ActorKind::Classical),
            "fixed" => Ok(ActorKind::Fixed),
            other => Err(Error::Config(format!(
                "unknown actor kind {other:?} (expected quantum, classical or fixed)"
            ))),
        }
    }
}

impl std::fmt::Display for ActorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_per_class: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_per_class: 250 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub head_hidden: Vec<usize>,
    pub classical_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            head_hidden: vec![8],
            classical_hidden: vec![32, 32],
            critic_hidden: vec![64, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Images generated by `sample`.
    pub n: usize,
    /// Labels cycled over; empty means all classes.
    pub labels: Vec<usize>,
    /// Episodes used when scoring controllers by mean episodic reward.
    pub eval_episodes: usize,
    /// Also write PNG copies of sampled images.
    pub png: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n: 200,
            labels: Vec::new(),
            eval_episodes: 40,
            png: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub actor: ActorKind,
    pub cfg0: f64,
    pub iterations: usize,
    pub workers: usize,
    pub dataset: DatasetConfig,
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserConfig,
    pub classifier: ClassifierConfig,
    pub vqc: VqcConfig,
    pub networks: NetworkConfig,
    pub ppo: PpoConfig,
    pub reward: RewardConfig,
    pub sample: SampleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            out_dir: PathBuf::from("out"),
            actor: ActorKind::Quantum,
            cfg0: 5.0,
            iterations: 300,
            workers: 1,
            dataset: DatasetConfig::default(),
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserConfig::default(),
            classifier: ClassifierConfig::default(),
            vqc: VqcConfig::default(),
            networks: NetworkConfig::default(),
            ppo: PpoConfig::default(),
            reward: RewardConfig::default(),
            sample: SampleConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if !(GUIDANCE_MIN..=GUIDANCE_MAX).contains(&self.cfg0) {
            return Err(Error::Config(format!(
                "cfg0 = {} outside [{GUIDANCE_MIN}, {GUIDANCE_MAX}]",
                self.cfg0
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.dataset.n_per_class == 0 {
            return Err(Error::Config("dataset.n_per_class must be positive".into()));
        }
        if let Some(&l) = self.sample.labels.iter().find(|&&l| l >= crate::diffusion::NUM_CLASSES) {
            return Err(Error::Config(format!("sample label {l} out of range")));
        }
        if !(0.0..=1.0).contains(&self.denoiser.p_uncond) {
            return Err(Error::Config("denoiser.p_uncond must be in [0, 1]".into()));
        }
        NoiseSchedule::new(self.schedule)?;
        self.vqc.validate()?;
        self.ppo.validate()?;
        self.reward.validate()
    }
}
