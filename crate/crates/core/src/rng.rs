//! Counter-based RNG derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by
//! (seed, purpose tag, counters) instead of one long mutable stream. That
//! makes any point in training reconstructible from plain integers, which
//! is what lets checkpoint resume reproduce the original run bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes; values are part of the checkpoint compatibility
/// surface and must not be renumbered.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const SYNTH: u64 = 4;
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn derive_key(seed: u64, tags: &[u64]) -> u64 {
    let mut k = splitmix64(seed);
    for &t in tags {
        k = splitmix64(k ^ splitmix64(t.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    k
}

/// Independent stream for `(seed, tags)`; same inputs, same stream.
pub fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, tags))
}
