//! Seed derivation. Every random decision draws from a stream keyed by
//! (run seed, purpose, indices), so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_TRAJECTORY: u64 = 0x7472616a;
pub const STREAM_HOLDOUT: u64 = 0x686f6c64;
pub const STREAM_ROTATION: u64 = 0x726f7461;
pub const STREAM_INIT: u64 = 0x696e6974;
pub const STREAM_OFFSPRING: u64 = 0x6f666673;
pub const STREAM_SAMPLE: u64 = 0x73616d70;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, parts))
}
