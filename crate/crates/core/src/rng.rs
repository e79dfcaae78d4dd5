//! Counter-based random streams.
//!
//! A stream is addressed by `(master seed, purpose tag, index)`. The triple is
//! written straight into a ChaCha8 key, so the numbers a trial sees depend only
//! on its address and never on which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub master: u64,
    pub tag: u64,
    pub index: u64,
}

const KEY_DOMAIN: u64 = 0x5343_5245_454e_4544; // "SCREENED"

impl StreamId {
    pub fn new(master: u64, purpose: &str, index: u64) -> Self {
        StreamId {
            master,
            tag: purpose_tag(purpose),
            index,
        }
    }

    /// Sub-stream derived from this one, e.g. per scale or per probe.
    pub fn child(&self, index: u64) -> Self {
        StreamId {
            master: self.master,
            tag: self.tag ^ self.index.rotate_left(17) ^ 0x9e37_79b9_7f4a_7c15,
            index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master.to_le_bytes());
        key[8..16].copy_from_slice(&self.tag.to_le_bytes());
        key[16..24].copy_from_slice(&self.index.to_le_bytes());
        key[24..].copy_from_slice(&KEY_DOMAIN.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

/// FNV-1a of the purpose string.
pub fn purpose_tag(purpose: &str) -> u64 {
    purpose.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
