//! Pipeline stages behind the `cfgpilot` command line.
//!
//! Every stage reads its inputs from, and writes its outputs to, a fixed layout
//! under one output root (see [`Layout`]). Stages are deterministic for a given
//! configuration and seed when run with a single worker.

pub mod commands;
pub mod layout;
pub mod report;

use std::path::PathBuf;

use cfgpilot::config::RunConfig;

pub use layout::Layout;

/// Resolved configuration for one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: RunConfig,
    pub out: PathBuf,
    /// Print per-epoch and per-iteration progress to stderr.
    pub verbose: bool,
}

impl Settings {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>) -> Self {
        Self {
            config,
            out: out.into(),
            verbose: false,
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.out)
    }
}
