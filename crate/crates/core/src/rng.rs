//! Seeding conventions.
//!
//! Every stochastic component draws from `ChaCha8Rng` (a counter-based
//! stream cipher generator with a portable, documented output sequence).
//! Independent streams are derived from one user seed with
//! [`derive_seed`], and integer sampling always goes through `u32` ranges
//! so sequences are identical on 32- and 64-bit targets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for sub-stream `(tag, index)` of `base`.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    mix(mix(mix(base ^ 0x9e37_79b9_7f4a_7c15).wrapping_add(tag)).wrapping_add(index))
}

pub fn rng_for(base: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag, index))
}

/// Serializable position of a `ChaCha8Rng`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub generator: String,
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            generator: "chacha8".into(),
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = |m: &str| Error::Config(format!("rng state: {m}"));
        if self.generator != "chacha8" || self.seed.len() != 64 {
            return Err(bad("unsupported generator or seed length"));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad("seed is not hex"))?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad("word_pos is not an integer"))?);
        Ok(rng)
    }
}
