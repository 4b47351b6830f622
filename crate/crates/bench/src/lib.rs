//! Seeded fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ugstream_core::verify::random_subset;
use ugstream_core::{sample_matching, sample_ug, Dist, FunctionTable, Matching, UgInstance};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A structured random subset of `Z_p^n`.
pub fn subset(p: u32, n: usize, seed: u64) -> FunctionTable {
    random_subset(p, n, &mut rng(seed)).expect("fixture dimensions are small")
}

pub fn matching(n: usize, r: usize, seed: u64) -> Matching {
    sample_matching(n, r, &mut rng(seed)).expect("2r <= n")
}

pub fn n_instance(p: u32, n: usize, alpha_r: usize, k: usize, seed: u64) -> UgInstance {
    sample_ug(p, n, alpha_r, k, Dist::N, &mut rng(seed)).expect("valid parameters")
}
