//! Seeded random streams. Every component draws from its own ChaCha stream so
//! adding draws in one component never shifts another's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers, one per consumer of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ProcessNoise = 1,
    MeasurementNoise = 2,
    Excitation = 3,
    MultiStart = 4,
}

/// A generator for `stream` derived from the run seed.
pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
