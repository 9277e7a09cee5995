//! Reproducible random streams.
//!
//! Every draw is addressed by `(seed, path_id, purpose, counter)`: the seed
//! and purpose key a ChaCha8 block function, the path id selects its stream
//! and the counter selects the word position. Draws are therefore
//! independent of evaluation order and thread schedule.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamPurpose {
    Brownian,
    Chain,
}

impl StreamPurpose {
    fn tag(self) -> u8 {
        match self {
            StreamPurpose::Brownian => 0x42,
            StreamPurpose::Chain => 0x43,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub path_id: u64,
    pub purpose: StreamPurpose,
}

impl RngStream {
    pub fn new(seed: u64, path_id: u64, purpose: StreamPurpose) -> Self {
        RngStream { seed, path_id, purpose }
    }

    /// The `(brownian, chain)` pair for one simulated path.
    pub fn pair(seed: u64, path_id: u64) -> (Self, Self) {
        (
            Self::new(seed, path_id, StreamPurpose::Brownian),
            Self::new(seed, path_id, StreamPurpose::Chain),
        )
    }

    fn generator(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8] = self.purpose.tag();
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.path_id);
        rng
    }

    /// Sequential reader starting at counter 0.
    pub fn reader(&self) -> StreamReader {
        StreamReader { rng: self.generator() }
    }

    /// Uniform draw in `[0, 1)` at `counter`.
    pub fn uniform(&self, counter: u64) -> f64 {
        let mut r = self.reader();
        r.seek_uniform(counter);
        r.next_uniform()
    }

    /// `dims` independent `N(0, dt)` draws for step `step`.
    pub fn gaussian_increments(&self, step: u64, dims: usize, dt: f64) -> Vec<f64> {
        let mut out = vec![0.0; dims];
        let mut r = self.reader();
        r.fill_increments(step, dt, &mut out);
        out
    }
}

/// Stateful view of an [`RngStream`] that avoids re-seeking when draws are
/// consumed in counter order.
pub struct StreamReader {
    rng: ChaCha8Rng,
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

impl StreamReader {
    fn seek_words(&mut self, pos: u128) {
        if self.rng.get_word_pos() != pos {
            self.rng.set_word_pos(pos);
        }
    }

    pub fn seek_uniform(&mut self, counter: u64) {
        self.seek_words(2 * counter as u128);
    }

    pub fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Writes `out.len()` independent `N(0, dt)` draws for step `step`.
    /// Box–Muller on pairs, so each step consumes `4 * ceil(d/2)` words.
    pub fn fill_increments(&mut self, step: u64, dt: f64, out: &mut [f64]) {
        let pairs = out.len().div_ceil(2) as u128;
        self.seek_words(step as u128 * 4 * pairs);
        let scale = dt.sqrt();
        for chunk in out.chunks_mut(2) {
            // u1 in (0, 1], u2 in [0, 1)
            let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * TWO_POW_M53;
            let u2 = (self.rng.next_u64() >> 11) as f64 * TWO_POW_M53;
            let radius = (-2.0 * u1.ln()).sqrt() * scale;
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            chunk[0] = radius * c;
            if let Some(second) = chunk.get_mut(1) {
                *second = radius * s;
            }
        }
    }
}
