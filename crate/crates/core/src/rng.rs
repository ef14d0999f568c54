//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived from
//! one user seed, so adding draws to one stream never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Dictionary = 1,
    Codes = 2,
    ModelInit = 3,
    Batches = 4,
    LatentInit = 5,
    Resample = 6,
    Probe = 7,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
