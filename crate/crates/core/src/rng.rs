//! Counter-based random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream whose 256-bit key is
//! derived from `(seed, purpose, replica)` with SplitMix64 and whose 64-bit
//! stream id packs `(agent, iteration)`. A stream can be recreated from its
//! key alone, so any (agent, iteration) draw is replayable without running the
//! iterations before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Quantize = 1,
    /// Monte-Carlo replays at a frozen state.
    Probe = 2,
    /// Deterministic draw used to measure payload size during interval search.
    IntervalSearch = 3,
    Synthetic = 4,
    Test = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub replica: u64,
    pub agent: u32,
    pub iteration: u32,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose, agent: usize, iteration: usize) -> Self {
        Self {
            seed,
            purpose,
            replica: 0,
            agent: agent as u32,
            iteration: iteration as u32,
        }
    }

    pub fn with_replica(mut self, replica: u64) -> Self {
        self.replica = replica;
        self
    }

    pub fn stream(&self) -> ChaCha8Rng {
        let mut state = self.seed;
        let mut key = [0u8; 32];
        let words = [
            splitmix64(&mut state),
            splitmix64(&mut state) ^ (self.purpose as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93),
            splitmix64(&mut state) ^ self.replica.wrapping_mul(0xA076_1D64_78BD_642F),
            splitmix64(&mut state),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(((self.agent as u64) << 32) | self.iteration as u64);
        rng
    }
}

/// SplitMix64 step.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
