//! Seeded random streams.
//!
//! Every consumer draws from its own ChaCha stream derived from the run seed
//! and a fixed stream id, so adding draws in one subsystem never shifts the
//! values another subsystem sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn stream(self, id: u64) -> StreamRng {
        stream(self.0, id)
    }

    /// Stream for an indexed sub-task (iteration, particle, chain) of `id`.
    pub fn substream(self, id: u64, index: u64) -> StreamRng {
        stream(self.0, id.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index))
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed(seed)
    }
}

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Well-known stream ids.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const PERTURB: u64 = 3;
    pub const INIT: u64 = 10;
    pub const PRIOR_SAMPLES: u64 = 11;
    pub const MOMENTUM: u64 = 12;
    pub const ACCEPT: u64 = 13;
    pub const MINIBATCH: u64 = 14;
}
