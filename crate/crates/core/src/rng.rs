//! Seed derivation.
//!
//! All randomness flows from a single 64-bit seed. A seed is expanded into
//! sub-seeds with SplitMix64 and every user gets an independent ChaCha8
//! stream selected by its index, so results do not depend on how users are
//! split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags keep the streams used for different purposes apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    DataKeys = 1,
    DataMeans = 2,
    Perturb = 3,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a counter (e.g. a repeat index).
pub fn derive_seed(seed: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(counter.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// The stream for one `(seed, purpose, index)` triple.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose as u64));
    rng.set_stream(index);
    rng
}
