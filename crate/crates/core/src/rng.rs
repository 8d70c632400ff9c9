//! Stateless counter-based mixing and seed derivation.
//!
//! Edge weights and child seeds are pure functions of `(seed, counter)` built
//! from the SplitMix64 finalizer, so they can be evaluated lazily, in any
//! order and from any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key a stream: the value fed to [`counter_u64`].
#[inline]
pub fn stream_key(seed: u64) -> u64 {
    mix64(seed ^ 0x6A09_E667_F3BC_C909)
}

/// `counter`-th output of the SplitMix64 sequence started at `key`.
#[inline]
pub fn counter_u64(key: u64, counter: u64) -> u64 {
    mix64(key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Map 64 random bits to the open interval (0, 1) using the top 52 bits;
/// the half-step shift keeps both endpoints out of the range.
#[inline]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Child seed for replicate / task `index`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master ^ 0xD1B5_4A32_D192_ED03).wrapping_add(mix64(index.wrapping_add(GOLDEN))))
}

/// A conventional PRNG for sequential sampling (paths, Bernoulli graphs).
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed))
}

/// Parse a seed written in decimal or as `0x`-prefixed hex.
pub fn parse_seed(text: &str) -> Option<u64> {
    let t = text.trim().replace('_', "");
    match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => t.parse().ok(),
    }
}
