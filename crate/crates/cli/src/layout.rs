//! Output directory layout.

use std::path::{Path, PathBuf};

use cfgpilot::config::ActorKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn denoiser_dir(&self) -> PathBuf {
        self.root.join("denoiser")
    }

    pub fn denoiser_checkpoint(&self) -> PathBuf {
        self.denoiser_dir().join("denoiser.ckpt")
    }

    pub fn classifier_dir(&self) -> PathBuf {
        self.root.join("classifier")
    }

    pub fn classifier_checkpoint(&self) -> PathBuf {
        self.classifier_dir().join("classifier.ckpt")
    }

    pub fn controller_dir(&self, actor: ActorKind) -> PathBuf {
        self.root.join("controller").join(actor.name())
    }

    /// Best-by-mean-reward actor; this is what `sample` loads.
    pub fn actor_checkpoint(&self, actor: ActorKind) -> PathBuf {
        self.controller_dir(actor).join("actor.ckpt")
    }

    pub fn critic_checkpoint(&self, actor: ActorKind) -> PathBuf {
        self.controller_dir(actor).join("critic.ckpt")
    }

    pub fn training_log(&self, actor: ActorKind) -> PathBuf {
        self.controller_dir(actor).join("log.csv")
    }

    pub fn samples_dir(&self, actor: ActorKind) -> PathBuf {
        self.root.join("samples").join(actor.name())
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn eval_csv(&self, actor: ActorKind) -> PathBuf {
        self.eval_dir().join(format!("{}.csv", actor.name()))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// `{label}_{seed}_{index}` stem of a sampled image.
pub fn sample_stem(label: usize, seed: u64, index: usize) -> String {
    format!("{label}_{seed}_{index}")
}

/// Inverse of [`sample_stem`].
pub fn parse_sample_stem(stem: &str) -> Option<(usize, u64, usize)> {
    let mut parts = stem.split('_');
    let label = parts.next()?.parse().ok()?;
    let seed = parts.next()?.parse().ok()?;
    let index = parts.next()?.parse().ok()?;
    parts.next().is_none().then_some((label, seed, index))
}
