//! Seed derivation. Every random stream in the crate is a `ChaCha8Rng`
//! seeded from a master seed and a small tuple of stream coordinates, so
//! independent work items never share or depend on each other's state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with stream coordinates.
pub fn derive(master: u64, stream: &[u64]) -> u64 {
    stream
        .iter()
        .fold(splitmix64(master), |acc, &s| splitmix64(acc ^ splitmix64(s)))
}

pub fn rng(master: u64, stream: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, stream))
}

/// Stream tags used across the crate.
pub mod stream {
    pub const SCENE: u64 = 1;
    pub const TRANSITIONS: u64 = 2;
    pub const OBS_INIT: u64 = 3;
    pub const OBS_BATCH: u64 = 4;
    pub const MOTION_INIT: u64 = 5;
    pub const MOTION_BATCH: u64 = 6;
    pub const EPISODE: u64 = 7;
    pub const EVAL_SCENE: u64 = 8;
    pub const SENSOR: u64 = 9;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // first outputs of the reference generator seeded with 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn streams_are_distinct() {
        assert_ne!(derive(1, &[2, 3]), derive(1, &[3, 2]));
        assert_ne!(derive(1, &[2]), derive(2, &[2]));
        assert_eq!(derive(5, &[7, 9]), derive(5, &[7, 9]));
    }
}
