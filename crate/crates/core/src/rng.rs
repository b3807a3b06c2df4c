//! Seeded random streams.
//!
//! One master seed fans out into independent named streams so that each
//! component (initialisation, selection, mutation, training, task episodes)
//! can be replayed in isolation. Per-evaluation seeds are derived from the
//! master seed and the global evaluation index, never from a shared stream,
//! which keeps parallel evaluation independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Selection = 2,
    Mutation = 3,
    Training = 4,
    Episodes = 5,
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(master_seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(which as u64);
    rng
}

/// Seed for the `index`-th task evaluation of a run.
pub fn evaluation_seed(master_seed: u64, index: u64) -> u64 {
    mix64(mix64(master_seed ^ 0x005E_ED0F_E7A1) ^ index)
}
