//! Named random sub-streams derived from one global seed.
//!
//! Every stage draws from its own stream (`scene`, `noise`, `split`, `init`,
//! `shuffle`, `shapley`, ...). Per-item streams (one per UE, one per
//! permutation) use the ChaCha stream counter so results never depend on how
//! work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a stream name into a seed (FNV-1a over the name, then splitmix).
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

pub fn rng(seed: u64, name: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, name))
}

pub fn rng_indexed(seed: u64, name: &str, index: u64) -> StreamRng {
    let mut r = rng(seed, name);
    r.set_stream(index);
    r
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;

    #[test]
    fn names_and_indices_separate_streams() {
        let a: u64 = rng(1, "scene").random();
        let b: u64 = rng(1, "noise").random();
        let c: u64 = rng_indexed(1, "noise", 1).random();
        let d: u64 = rng_indexed(1, "noise", 1).random();
        assert_ne!(a, b);
        assert_ne!(b, c);
        assert_eq!(c, d);
    }
}
