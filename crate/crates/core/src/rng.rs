//! Deterministic random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream keyed by
//! `(seed, stream)`, so results depend only on the seed and never on how
//! work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream used for parameter initialization.
pub const STREAM_INIT: u64 = 0;
/// Stream used for message sampling during training.
pub const STREAM_MESSAGES: u64 = 1;
/// Stream used for channel noise during training.
pub const STREAM_NOISE: u64 = 2;

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent seed for sub-task `index` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
