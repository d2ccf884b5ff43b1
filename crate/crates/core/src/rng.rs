//! Seed derivation.
//!
//! Every random stream in the crate is keyed by a tuple of integers
//! (master seed, tree index, variable index, ...) and never drawn from a
//! shared generator, so parallel and sequential execution consume identical
//! randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `seed` with a path of tags into a new, well-separated seed.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(seed: u64, tags: &[u64]) -> Rng {
    rng_from(derive(seed, tags))
}

// Stream tags.
pub(crate) const TAG_BOOTSTRAP: u64 = 0xB007;
pub(crate) const TAG_GROW: u64 = 0x6207;
pub(crate) const TAG_TREE: u64 = 0x7EEE;
pub(crate) const TAG_PERMUTE: u64 = 0x9E2A;
pub(crate) const TAG_REPEAT: u64 = 0x2E9E;
pub(crate) const TAG_FOLDS: u64 = 0xF01D;
