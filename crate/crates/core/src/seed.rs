//! Per-component seed derivation.
//!
//! Every stage draws its generator seed from `derive(global, stream)`, so
//! rerunning one stage does not depend on how many numbers another consumed.

/// One step of the splitmix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(global) ^ stream)`.
pub fn derive(global: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(global) ^ stream)
}

pub mod stream {
    pub const DATASET: u64 = 1;
    pub const DENOISER: u64 = 2;
    pub const CLASSIFIER: u64 = 3;
    pub const ACTOR: u64 = 4;
    pub const CRITIC: u64 = 5;
    pub const ENVS: u64 = 6;
    pub const POLICY_NOISE: u64 = 7;
    pub const PPO: u64 = 8;
    pub const SAMPLES: u64 = 9;
}
