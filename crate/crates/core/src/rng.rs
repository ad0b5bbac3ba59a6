//! Counter-based random streams.
//!
//! A stream is identified by `(master seed, stream id)`; ChaCha keeps the
//! streams independent, so any replication can be regenerated on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Stream id for replication `rep` of experiment cell `cell`.
pub fn replication_stream(cell: usize, rep: usize) -> u64 {
    ((cell as u64) << 40) | rep as u64
}
