//! Seed derivation. Every random quantity comes from a ChaCha20 stream keyed
//! by `seed_from_u64(master ^ tag · φ64)` with the stream id set to the trial
//! index, so trial `t` sees the same numbers whether it runs alone, inside a
//! batch, or on any worker.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// 2⁶⁴/φ, used to spread purpose tags over the key space.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub mod tags {
    pub const FIG1: u64 = 1;
    pub const FIG2: u64 = 2;
    pub const FIG3: u64 = 3;
    pub const SUM_SE: u64 = 4;
    pub const FROZEN_CLUSTERS: u64 = 5;

    /// Sub-tag for a case inside a figure (e.g. one distance of a sweep).
    pub fn case(base: u64, index: usize) -> u64 {
        base.wrapping_mul(1_000_003).wrapping_add(index as u64 + 1)
    }
}

pub fn derive_key(master: u64, tag: u64) -> u64 {
    master ^ tag.wrapping_mul(GOLDEN_GAMMA)
}

pub fn trial_rng(master: u64, tag: u64, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_key(master, tag));
    rng.set_stream(trial as u64);
    rng
}
