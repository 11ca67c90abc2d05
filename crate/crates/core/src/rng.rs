//! Counter-based random streams.
//!
//! Every episode seed feeds one ChaCha8 key; each consumer reads its own
//! stream of that key, so adding draws to one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Episode = 0,
    Disturbance = 1,
    Erosion = 2,
    FlightPlan = 3,
    Sensor = 4,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
