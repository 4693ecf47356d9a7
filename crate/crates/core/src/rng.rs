//! Seed derivation: every consumer of randomness gets its own ChaCha stream
//! derived from the master seed, a stream tag, and an index, so rollout order
//! and thread count never change the numbers anyone draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_DATA: u64 = 1;
pub const STREAM_ROLLOUT: u64 = 2;
pub const STREAM_UPDATES: u64 = 3;
pub const STREAM_SHUFFLE: u64 = 4;
pub const STREAM_INIT: u64 = 5;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream.wrapping_mul(0xA076_1D64_78BD_642F)) ^ index)
}

pub fn derive_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct_and_stable() {
        let a = derive_seed(7, STREAM_DATA, 0);
        let b = derive_seed(7, STREAM_DATA, 1);
        let c = derive_seed(7, STREAM_ROLLOUT, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, STREAM_DATA, 0));
    }
}
