//! Derivation of independent random streams from one master seed.
//!
//! Every consumer of randomness gets its own stream, keyed by a [`Stream`]
//! tag and an index (the episode number for per-episode streams, 0
//! otherwise), so adding draws to one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Network weight initialisation.
    Init = 1,
    /// World reset of episode `i`.
    Episode = 2,
    /// Replay minibatch sampling.
    Buffer = 3,
    /// ε-greedy draws.
    Policy = 4,
    /// Object kind of episode `i` when training on a mixture.
    Object = 5,
    /// World reset of evaluation episode `i`.
    Evaluation = 6,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ stream as u64) ^ index)
}

pub fn rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, stream, index))
}
