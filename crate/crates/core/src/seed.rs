//! Deterministic seed derivation.
//!
//! Every random draw in an experiment comes from a generator derived from
//! `(master seed, purpose tag, index)`, so results do not depend on the order
//! or the degree of parallelism in which trials are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type LabRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derive an independent generator for `(master, tag, index)`.
pub fn derive_rng(master: u64, tag: &str, index: u64) -> LabRng {
    let mut seed = [0u8; 32];
    let mut state = splitmix64(master) ^ fnv1a(tag);
    state = splitmix64(state ^ splitmix64(index));
    for chunk in seed.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    LabRng::from_seed(seed)
}

/// Generator for a bare master seed.
pub fn master_rng(master: u64) -> LabRng {
    derive_rng(master, "master", 0)
}
