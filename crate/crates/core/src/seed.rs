//! Seed derivation.
//!
//! Every random stream in the pipeline is a `ChaCha8Rng` seeded from a
//! master seed plus a path of tags, so enabling or disabling one strategy
//! never shifts the randomness seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract; do not renumber.
pub mod tag {
    pub const RUN: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const DISTRIBUTION: u64 = 3;
    pub const PARTITION: u64 = 4;
    pub const INIT: u64 = 5;
    pub const LOCAL_TRAIN: u64 = 6;
    pub const GLOBAL_TRAIN: u64 = 7;
    pub const EVAL: u64 = 8;
    pub const CLUSTER: u64 = 9;
    pub const FEDAVG_TRAIN: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `path` into `base` one component at a time.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(base: u64, path: &[u64]) -> Rng {
    rng(derive(base, path))
}
