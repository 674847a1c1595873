//! Shared fixtures for the kernel benchmarks.

use cfgpilot::diffusion::PIXELS;
use cfgpilot::qsim::{encode_features, VqcConfig, VqcParams};
use cfgpilot::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng) -> GrayImage {
    GrayImage::new(16, 16, random_pixels(rng)).unwrap()
}

pub fn random_pixels(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..PIXELS).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Default-sized circuit with its encoded input.
pub fn circuit(rng: &mut ChaCha8Rng) -> (VqcParams, Vec<f64>) {
    let params = VqcParams::random(VqcConfig::default(), rng).unwrap();
    let features: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
    (params, encode_features(&features, 4).unwrap())
}
