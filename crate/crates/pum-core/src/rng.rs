//! Seeded randomness.
//!
//! Every random draw comes from ChaCha20 (a counter-based generator) keyed by
//! a 64-bit seed. The 256-bit key is the first four outputs of SplitMix64
//! started at the seed, little-endian. Child seeds are derived with
//! [`split_seed`], so adding a new stream never shifts an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Identifier recorded in experiment metadata.
pub const RNG_ALGORITHM: &str = "chacha20-splitmix64-key";

pub type PumRng = ChaCha20Rng;

/// SplitMix64 finalizer applied to `x + golden gamma`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a hash of a stream label.
fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3))
}

/// Child seed = splitmix64(splitmix64(root ⊕ fnv1a(label)) ⊕ splitmix64(index)).
pub fn split_seed(root: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ fnv1a(label)) ^ splitmix64(index))
}

pub fn rng_from_seed(seed: u64) -> PumRng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_mut(8) {
        let word = splitmix64(state);
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference SplitMix64 generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn split_streams_are_distinct_and_stable() {
        let a = split_seed(7, "mc", 0);
        assert_eq!(a, split_seed(7, "mc", 0));
        assert_ne!(a, split_seed(7, "mc", 1));
        assert_ne!(a, split_seed(7, "scaling", 0));
        assert_ne!(a, split_seed(8, "mc", 0));
    }

    #[test]
    fn same_seed_same_stream() {
        let x: Vec<u64> = (0..4).map(|_| rng_from_seed(3).random()).collect();
        let mut r = rng_from_seed(3);
        let first: u64 = r.random();
        assert_eq!(x[0], first);
    }
}
