//! Counter-mode pseudorandom function standing in for the random oracle.
//!
//! Every random choice in the crate is `word(key, counter)` where the key is
//! derived from `(seed, domain, v, column)`. The mixer is the SplitMix64
//! finalizer, so register states are reproducible on every platform.

use rand::RngCore;

/// `2^64 / φ`, the SplitMix64 increment.
pub const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Domain separators for the independent random families.
pub mod domain {
    pub const POISSON_CELL: u64 = 1;
    pub const POISSON_TAIL: u64 = 2;
    pub const BINOMIAL_LEVEL: u64 = 3;
    pub const SPLITTER: u64 = 4;
    pub const SAMPLER_LEVEL: u64 = 5;
    pub const WORKLOAD: u64 = 6;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key for the stream of `(seed, domain, v, column)`.
#[inline]
pub fn key(seed: u64, domain: u64, v: u64, column: u64) -> u64 {
    let k = mix64(seed ^ domain.wrapping_mul(GOLDEN));
    let k = mix64(k ^ v);
    mix64(k.wrapping_add(column.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// The `counter`-th word of the stream under `key`.
#[inline]
pub fn word(key: u64, counter: u64) -> u64 {
    mix64(key.wrapping_add(counter.wrapping_mul(GOLDEN)))
}

/// Uniform in `[0, 1)` from the top 53 bits of a word.
#[inline]
pub fn unit(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `(0, 1]`, safe to take logarithms of.
#[inline]
pub fn unit_open(word: u64) -> f64 {
    ((word >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential view of one PRF stream, usable wherever an `RngCore` is needed.
#[derive(Clone, Debug)]
pub struct PrfStream {
    key: u64,
    counter: u64,
}

impl PrfStream {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }
}

impl RngCore for PrfStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let w = word(self.key, self.counter);
        self.counter = self.counter.wrapping_add(1);
        w
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
