//! Seed handling shared by every stochastic stage.
//!
//! A run is governed by one master seed. Each task (a split, a topic fit, a
//! tree, a fold-in) gets its own seed `mix(parent, index)`, so results never
//! depend on the order in which parallel tasks execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Derives a child seed from `parent` and a task index (SplitMix64 finalizer
/// over `parent + golden_gamma * (index + 1)`).
pub fn mix(parent: u64, index: u64) -> u64 {
    let mut z = parent.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fixed task indices under the master seed.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const TOPICS_CAMPAIGN: u64 = 2;
    pub const TOPICS_INCENTIVE: u64 = 3;
    pub const FOLD_IN_CAMPAIGN: u64 = 4;
    pub const FOLD_IN_INCENTIVE: u64 = 5;
    pub const FOREST: u64 = 6;
}

/// 64-bit FNV-1a, used for stable content fingerprints.
pub fn fnv1a(parts: impl IntoIterator<Item = impl AsRef<[u8]>>) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in part.as_ref() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator so ["ab","c"] and ["a","bc"] differ
        hash ^= 0xff;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
