//! Counter-based randomness.
//!
//! Draw `i` of a stream is generated by a fresh ChaCha8 generator whose key
//! is `(master_seed, stream_id)` and whose 64-bit stream/nonce word is `i`.
//! A draw therefore depends only on `(master_seed, stream_id, i)`, never on
//! how many draws were taken before it or which thread took them. Gaussian
//! variates come from `rand_distr::StandardNormal` (ziggurat).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type DrawRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

const KEY_TAG: [u8; 16] = *b"clipbias-stream\0";

impl SeededStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Generator for draw number `index`.
    pub fn draw(&self, index: u64) -> DrawRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_id.to_le_bytes());
        key[16..].copy_from_slice(&KEY_TAG);
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }

    /// A stream for an independent sub-purpose, e.g. minibatch indices vs.
    /// privacy noise inside one optimizer run.
    pub fn child(&self, label: u64) -> SeededStream {
        SeededStream {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(label.wrapping_add(0x5bd1_e995))),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
