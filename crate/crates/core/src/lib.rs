//! Learned classifier-free guidance control for diffusion sampling.
//!
//! A small actor-critic pair, trained with PPO and GAE, chooses a per-step
//! offset to the guidance scale of a DDIM sampler. The actor is either a
//! hybrid model (exactly simulated variational circuit feeding a dense head)
//! or a plain dense network. Everything runs on the CPU in double precision:
//!
//! - [`qsim`]: statevector simulation, Pauli-Z readout, parameter-shift gradients.
//! - [`nn`]: dense networks with reverse-mode gradients and Adam.
//! - [`policy`]: hybrid and classical actors, the critic, Gaussian action helpers.
//! - [`diffusion`]: procedural shape data, noise schedule, denoiser, DDIM with CFG,
//!   proxy classifier and the controller's state features.
//! - [`rl`]: reward, environments, rollouts, GAE, PPO, training and inference loops.
//! - [`metrics`]: PSNR, SSIM, total variation, LPIPS-proxy and parameter counts.
//! - [`config`], [`checkpoint`], [`io`]: run configuration and file formats.

pub mod checkpoint;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod policy;
pub mod qsim;
pub mod rl;
pub mod seed;

pub use error::{Error, Result};
pub use image::GrayImage;

/// Number of scalar features the controller observes per denoising step.
pub const STATE_DIM: usize = 6;

/// Controller observation.
pub type Observation = [f64; STATE_DIM];
