//! Deterministic random number generation.
//!
//! Two flavors: a sequential [`SplitMix64`] stream for dataset shuffling and
//! test-data synthesis, and a counter-based [`pixel_gaussian`] keyed by
//! `(seed, u, v, step)` so parallel rendering is order-independent and
//! bit-reproducible.

use crate::raster::TAU;

#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Sequential splitmix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        mix(self.state)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = (self.next_f64()).max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    pub fn next_below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

#[inline]
fn pixel_key(seed: u64, u: usize, v: usize, step: usize) -> u64 {
    mix(seed ^ mix((u as u64) << 40 ^ (v as u64) << 20 ^ step as u64))
}

#[inline]
fn key_to_unit(k: u64) -> f64 {
    (k >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw keyed by `(seed, u, v, step)`. The same key always
/// yields the same value, independent of evaluation order.
pub fn pixel_gaussian(seed: u64, u: usize, v: usize, step: usize) -> f64 {
    let k = pixel_key(seed, u, v, step);
    let u1 = key_to_unit(k).max(f64::MIN_POSITIVE);
    let u2 = key_to_unit(mix(k ^ 0xD1B54A32D192ED03));
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}
