//! Seed lineage helpers.
//!
//! Every random stream in a run is derived from the master seed plus a
//! short path of integers (repetition, iteration, purpose, sample id, ...).
//! Streams never depend on scheduling or on how many draws another stream
//! consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags used when deriving seeds inside a repetition.
pub mod purpose {
    pub const SPLIT: u64 = 1;
    pub const MODEL: u64 = 2;
    pub const SELECT: u64 = 3;
    pub const SCORE: u64 = 4;
    pub const SIGMA: u64 = 5;
    pub const ORACLE: u64 = 6;
    pub const REPETITION: u64 = 7;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a path of integers into a child seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, path))
}
