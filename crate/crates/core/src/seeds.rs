//! Hierarchical seed splitting.
//!
//! Every random stream is derived from one user seed and a path of integer
//! coordinates (cell index, configuration index, bath-state index, ...):
//!
//! ```text
//! h0 = splitmix64(seed ^ ROOT)
//! h_{k+1} = splitmix64(h_k ^ splitmix64(path_k + STEP))
//! ```
//!
//! The resulting 64-bit value seeds a ChaCha8 stream. Streams depend only on
//! their path, never on scheduling order, so parallel runs reproduce serial
//! ones bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ROOT: u64 = 0x6a09_e667_f3bc_c909;
const STEP: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed from `seed` and a coordinate path.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed ^ ROOT), |h, &p| splitmix64(h ^ splitmix64(p.wrapping_add(STEP))))
}

/// Deterministic generator for a derived stream.
pub fn rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}

/// Stream tags keep independent uses of the same coordinates apart.
pub mod tag {
    pub const BATH: u64 = 1;
    pub const STATES: u64 = 2;
    pub const SWEEP: u64 = 3;
    pub const YIELD: u64 = 4;
    pub const BENCH: u64 = 5;
    pub const VALIDATE: u64 = 6;
}
