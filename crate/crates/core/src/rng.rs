//! Deterministic RNG construction and seed derivation.
//!
//! All randomness in the crate flows through ChaCha8 streams seeded from
//! `u64` values, so results are reproducible across platforms and releases.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// splitmix64 finalizer; mixes a word into an avalanche-quality hash.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and a path of indices.
/// Pure function of its arguments; order-sensitive.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut h = mix(base ^ 0x5851_f42d_4c95_7f2d);
    for &p in path {
        h = mix(h ^ p.wrapping_mul(0xda94_2042_e4dd_58b5));
    }
    h
}
