//! Counter-based, splittable random streams.
//!
//! A stream is identified by `(seed, stream_id)` and positioned by a 64-bit
//! word counter. Output depends only on those three values, so a stream can be
//! rebuilt anywhere (for example on a worker thread) and produce the same draws.
//! The generator underneath is ChaCha8 keyed by the seed, with the stream id
//! in the nonce and the counter as the word position.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

// SplitMix64 finalizer; a bijection on u64.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn key_from_seed(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    key
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::at(seed, 0, 0)
    }

    /// Rebuilds the stream `(seed, stream_id)` positioned at `counter`.
    pub fn at(seed: u64, stream_id: u64, counter: u64) -> Self {
        let mut inner = ChaCha8Rng::from_seed(key_from_seed(seed));
        inner.set_stream(stream_id);
        inner.set_word_pos(counter as u128);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u64 {
        self.inner.get_word_pos() as u64
    }

    /// The `index`-th child of this stream at its current position.
    ///
    /// Children of one parent state have pairwise distinct ids: the id is a
    /// bijective mix of `base + index`.
    pub fn child(&self, index: u64) -> RngStream {
        let base = mix64(self.stream_id ^ mix64(self.counter().wrapping_add(0x632b_e59b_d9b4_e019)));
        RngStream::at(self.seed, mix64(base.wrapping_add(index)), 0)
    }

    /// Derives `count` independent streams. `self` is not advanced.
    pub fn split(&self, count: usize) -> Result<Vec<RngStream>> {
        if count == 0 {
            return invalid("split count must be at least 1");
        }
        Ok((0..count as u64).map(|i| self.child(i)).collect())
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
