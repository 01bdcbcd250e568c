//! Deterministic derivation of independent RNG streams from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a seed with further words into a new, well-mixed seed.
pub fn derive(seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix64(seed), |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Seed keyed by a position, quantized to 2^-20 voxel so that the same
/// point reached through different arithmetic paths draws the same samples.
pub fn point_seed(seed: u64, p: [f64; 3], tag: u64) -> u64 {
    let q = |v: f64| (v * 1_048_576.0).round() as i64 as u64;
    derive(seed, &[q(p[0]), q(p[1]), q(p[2]), tag])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
