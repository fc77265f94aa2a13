//! Deterministic seed derivation.
//!
//! Every random decision in this crate flows through a single master seed.
//! Sub-seeds are derived with a splittable counter scheme built on the
//! SplitMix64 finalizer: `child_seed(master, domain, index)` mixes the master
//! seed with a domain tag and a counter, so independent pipeline stages (and
//! independent instances within a stage) get decorrelated, reproducible
//! streams. Generators are ChaCha8 streams seeded from the derived value via
//! `SeedableRng::seed_from_u64`, which is itself specified as a SplitMix64
//! expansion. Re-running any stage with the same master seed therefore
//! reproduces its output bit for bit on the same build.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags for seed derivation. Each consumer of randomness owns one tag.
pub mod domain {
    pub const SIM_BASE: u64 = 1;
    pub const SIM_ROIS: u64 = 2;
    pub const SIM_NOISE: u64 = 3;
    pub const TRAIN_INIT: u64 = 4;
    pub const TRAIN_SHUFFLE: u64 = 5;
    pub const TRAIN_DROPOUT: u64 = 6;
    pub const FOLD_SPLIT: u64 = 7;
    pub const FOLD_TRAIN: u64 = 8;
    pub const SWEEP_CELL: u64 = 9;
    pub const MODEL_TRAIN: u64 = 10;
}

/// SplitMix64 finalizer (Steele, Lea & Flood's mixing function).
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the `index`-th child seed of `master` within `domain`.
pub fn child_seed(master: u64, domain: u64, index: u64) -> u64 {
    mix(master ^ mix(domain ^ mix(index)))
}

/// ChaCha8 generator seeded directly from a (derived) seed value.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// ChaCha8 generator for the `index`-th consumer of `master` in `domain`.
pub fn child_rng(master: u64, domain: u64, index: u64) -> ChaCha8Rng {
    rng_from(child_seed(master, domain, index))
}
