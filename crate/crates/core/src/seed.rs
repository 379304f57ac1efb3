//! Deterministic seed splitting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives an independent generator seed from a base seed and a stream tag.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A generator for the stream reached by applying `tags` in order.
pub fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    let seed = tags.iter().fold(base, |s, &t| derive_seed(s, t));
    ChaCha8Rng::seed_from_u64(seed)
}
