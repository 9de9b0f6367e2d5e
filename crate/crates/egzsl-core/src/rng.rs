//! Seeded, version-pinned randomness.
//!
//! Everything random in this crate (stream orders, synthetic data, minibatch
//! shuffles) flows through the recipe named by [`PRNG_ID`], so results can be
//! reproduced bit-for-bit on any platform and reimplemented in any language:
//!
//! - stream: ChaCha8, keyed with the 64-bit seed as little-endian bytes 0..8
//!   of the 32-byte key (bytes 8..32 zero), consumed as `next_u64` words;
//! - bounded index: `next_u64() % bound`;
//! - shuffle: Fisher-Yates from the top index downward;
//! - standard normal: Box-Muller on two `next_u64` draws, each mapped to
//!   (0,1) via `((x >> 11) + 0.5) * 2^-53`, `z = sqrt(-2 ln u1) cos(2 pi u2)`.
//!
//! Reports record this identifier next to the seed list.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identifier of the pinned randomness recipe, embedded in every report.
pub const PRNG_ID: &str = "chacha8-fisheryates-boxmuller-v1";

/// A fresh deterministic stream for the given seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Uniform index in `0..bound` (modulo reduction; bias is negligible for the
/// index ranges this crate uses and keeps the recipe trivially portable).
pub fn index(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    debug_assert!(bound > 0);
    (rng.next_u64() % bound as u64) as usize
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut ChaCha8Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}

/// A shuffled `0..n`.
pub fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(rng, &mut order);
    order
}

fn unit_open(x: u64) -> f64 {
    // 53-bit mantissa plus half an ulp keeps the value strictly inside (0,1).
    ((x >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// One standard normal deviate (Box-Muller, cosine branch).
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = unit_open(rng.next_u64());
    let u2 = unit_open(rng.next_u64());
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
