//! Seed derivation for reproducible, scheduling-independent randomness.
//!
//! Every random operation in the crate takes an explicit seed and derives a
//! private stream from it plus a few tag words, so results never depend on
//! call order or thread interleaving.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive an independent RNG stream from a base seed and a tag path.
pub fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(seed ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
