//! Seeded random streams.
//!
//! A [`RandomStream`] is a `(seed, stream_id)` pair. The generator behind it is
//! ChaCha8 keyed by the seed with the stream id written into the nonce, so the
//! k-th replicate's generator is built in O(1) from `(seed, k)` without
//! touching any other stream. Replicates may therefore be scheduled on any
//! number of threads in any order and still see the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator type handed out by [`RandomStream::rng`].
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Same seed, different stream.
    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Stream id for replicate `replicate` of grid cell `cell`.
///
/// Cells get disjoint 2^32-wide blocks of stream ids.
pub fn cell_stream_id(cell: usize, replicate: usize) -> u64 {
    ((cell as u64) << 32) | (replicate as u64 & 0xFFFF_FFFF)
}
