//! Toy pixel-space class-conditional diffusion: data, schedule, denoiser, DDIM
//! sampling with classifier-free guidance, and the proxy classifier.

pub mod classifier;
pub mod dataset;
pub mod denoiser;
pub mod guidance;
pub mod schedule;

pub use classifier::{train_classifier, ClassifierConfig, ClassifierReport, ProxyClassifier};
pub use dataset::{gen_dataset, ShapeClass, ShapeDataset, CLASS_NAMES, IMAGE_SIDE, NUM_CLASSES, PIXELS};
pub use denoiser::{train_denoiser, Denoiser, DenoiserConfig, DenoiserReport, OutputScaling};
pub use guidance::{build_state, cfg_combine, clip_guidance, GUIDANCE_MAX, GUIDANCE_MIN};
pub use schedule::{NoiseSchedule, ScheduleConfig};
