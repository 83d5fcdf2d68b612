//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream. Streams are
//! keyed by a master seed plus a path of indices (trial, grid position,
//! purpose), mixed with SplitMix64 so that neighbouring keys give unrelated
//! streams. Both algorithms are fully specified and platform independent,
//! so a given key reproduces the same draws everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream purposes, so that one trial seed can feed independent consumers.
pub(crate) mod purpose {
    pub const GRAPH: u64 = 1;
    pub const INIT: u64 = 2;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_streams_are_reproducible_and_distinct() {
        let s1 = derive_seed(7, &[0, 1]);
        assert_eq!(s1, derive_seed(7, &[0, 1]));
        assert_ne!(s1, derive_seed(7, &[1, 0]));
        assert_ne!(s1, derive_seed(8, &[0, 1]));

        let a: Vec<u64> = stream(s1).random_iter().take(4).collect();
        let b: Vec<u64> = stream(s1).random_iter().take(4).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference SplitMix64 generator seeded with 0.
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(splitmix64(0x9e37_79b9_7f4a_7c15), 0x6e78_9e6a_a1b9_65f4);
    }
}
