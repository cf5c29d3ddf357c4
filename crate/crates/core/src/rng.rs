//! Keyed random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha stream whose seed is
//! derived from a base seed plus a tuple of integer keys (sample index,
//! anchor, pass, ...). Work can therefore be split or reordered without
//! changing any result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream domains, so that e.g. sample 3 and anchor 3 never collide.
pub mod domain {
    pub const UE_POSITION: u64 = 0x01;
    pub const PATH_PHASE: u64 = 0x02;
    pub const SCATTERERS: u64 = 0x03;
    pub const INIT_TRUNK: u64 = 0x10;
    pub const INIT_HEAD: u64 = 0x11;
    pub const SHUFFLE: u64 = 0x12;
    pub const DROPOUT: u64 = 0x13;
    pub const MC_DROPOUT: u64 = 0x20;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `keys` into `seed`.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn keyed(seed: u64, keys: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, keys))
}
