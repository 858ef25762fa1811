//! Seeded random streams.
//!
//! Every simulation draws from ChaCha8 streams derived from a single 64-bit
//! seed. Each concern (message delays, adversary, workload, committee
//! selection, mining) owns a separate stream so that changing how often one
//! of them is consumed never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Delay = 1,
    Adversary = 2,
    Workload = 3,
    Selection = 4,
    Mining = 5,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one simulation of an experiment. Pure in its arguments, so the
/// order in which a sweep is executed cannot change any simulation.
pub fn mix_seed(base: u64, sweep_index: u64, run_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ sweep_index) ^ run_index.rotate_left(32))
}
