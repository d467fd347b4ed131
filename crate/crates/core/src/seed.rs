//! Deterministic seed derivation.
//!
//! Every random quantity in the workbench is drawn from a ChaCha stream whose
//! seed is derived from a base seed plus a path of integers (epoch, batch,
//! example index, ...). Streams for distinct paths are independent, and
//! nothing depends on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `base`.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(base: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(base, path))
}

/// Stream tags, so different consumers of one base seed never collide.
pub mod tag {
    pub const SPEECH_BANK: u64 = 1;
    pub const NOISE_BANK: u64 = 2;
    pub const INIT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const VALIDATION: u64 = 5;
    pub const TEST: u64 = 6;
    pub const SCENE: u64 = 7;
    pub const SHUFFLE: u64 = 8;
    pub const DIFFUSE: u64 = 9;
    pub const TEST_BANK: u64 = 10;
}
