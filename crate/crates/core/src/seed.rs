//! Seed derivation.
//!
//! A single 64-bit run seed drives every stochastic stage. Each stage and
//! target gets its own stream: `derive(seed, stage, index)` hashes the three
//! inputs with SplitMix64 finalizers, so streams for different stages or
//! indices never coincide even when user seeds are adjacent integers.
//!
//! Stage names in use: `"patient"` (cohort sampling), `"nor-init"` (noisy-OR
//! jitter), `"cv"` (fold assignment), `"forest"` (tree bootstrap),
//! `"subsample"` (random subgroups).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn fnv1a(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3))
}

pub fn derive(seed: u64, stage: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(stage)) ^ index)
}

pub fn rng(seed: u64, stage: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stage, index))
}
