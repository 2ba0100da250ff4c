//! Seed derivation helpers.
//!
//! All randomness in the crate flows from a single `u64` seed. Independent
//! streams (per training step, per Monte Carlo trial) are derived by mixing
//! the base seed with a stream index through SplitMix64, so results are
//! independent of any execution schedule.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of SplitMix64, used as a seed mixer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0x51ed_270b)))
}

/// RNG for a derived stream. Identical `(seed, stream)` pairs always yield
/// identical sequences.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}
