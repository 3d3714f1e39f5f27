//! Counter-keyed random streams.
//!
//! Every random draw in the crate comes from a generator seeded by a tuple of
//! integers (seed, trial index, parameter index, ...), so a value never
//! depends on how many draws happened before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep streams keyed by the same integers apart.
pub mod tag {
    pub const CONFIG: u64 = 0x636f_6e66;
    pub const OPT_NOISE: u64 = 0x6f70_746e;
    pub const CONSTRAINT_NOISE: u64 = 0x636f_6e6e;
    pub const LANDSCAPE: u64 = 0x6c61_6e64;
    pub const TRIAL: u64 = 0x7472_6961;
    pub const CALIBRATION: u64 = 0x6361_6c69;
    pub const SWEEP: u64 = 0x7377_6565;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes an ordered key into a single 64-bit value.
pub fn mix_key(key: &[u64]) -> u64 {
    key.iter().fold(splitmix64(key.len() as u64), |acc, &part| {
        splitmix64(acc ^ splitmix64(part))
    })
}

pub fn keyed_rng(key: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_key(key))
}
