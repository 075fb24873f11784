//! Counter-based deterministic randomness.
//!
//! Every random draw in the workbench comes from an [`RngStream`]: a ChaCha8
//! keystream addressed by `(seed, stream_id, counter)`. Per-trace work derives a
//! substream from the trace index, so results never depend on how traces are
//! split across threads or batches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Well-known stream identifiers, one per consumer.
pub mod streams {
    pub const PLAINTEXT: u64 = 0x01;
    pub const DEMAND_NOISE: u64 = 0x02;
    pub const BLEED: u64 = 0x04;
    pub const TVTF: u64 = 0x05;
    pub const SENSOR: u64 = 0x10;
    pub const SENSOR_LABELS: u64 = 0x11;
    pub const TRAIN_INIT: u64 = 0x20;
    pub const TRAIN_SHUFFLE: u64 = 0x21;
    pub const KEY: u64 = 0x30;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
    pub counter: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            counter: 0,
        }
    }

    /// Child stream keyed by `index` (typically a trace number).
    pub fn substream(&self, index: u64) -> Self {
        let id = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(self.counter)));
        Self {
            seed: self.seed,
            stream_id: id,
            counter: 0,
        }
    }

    /// Same stream, positioned at a different 64-byte block.
    pub fn at(&self, counter: u64) -> Self {
        Self { counter, ..*self }
    }

    /// Generator positioned at this stream's counter.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        // one counter step = one 64-byte ChaCha block = 16 words
        rng.set_word_pos(u128::from(self.counter) * 16);
        rng
    }
}
