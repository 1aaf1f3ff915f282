//! Counter-based random streams.
//!
//! Every path draws from its own ChaCha stream selected by
//! `(master seed, path index, purpose)`, so results never depend on
//! thread scheduling or on how many paths precede it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type PathRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Ambient = 0,
    Radial = 1,
    Angular = 2,
    Jumps = 3,
    Pairing = 4,
    Auxiliary = 5,
}

/// Identifies one path's randomness within an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamId {
    pub master: u64,
    pub index: u64,
}

impl StreamId {
    pub fn new(master: u64, index: u64) -> Self {
        StreamId { master, index }
    }

    pub fn rng(&self, purpose: Purpose) -> PathRng {
        stream(self.master, self.index, purpose)
    }
}

pub fn stream(master: u64, index: u64, purpose: Purpose) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index.wrapping_mul(16).wrapping_add(purpose as u64));
    rng
}
