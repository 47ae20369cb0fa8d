//! Seedable, counter-based random number generator.
//!
//! Each draw hashes `(key, counter)` with the SplitMix64 finalizer, so a
//! stream is a pure function of its seed and position: identical seeds
//! produce bit-identical streams on every platform, and independent
//! streams for parallel generation come from [`Rng::stream`] without any
//! shared state.

use alloc::vec::Vec;

use crate::fmath;
use crate::tensor::Tensor;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic counter-based RNG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    key: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix(seed ^ GOLDEN_GAMMA),
            counter: 0,
        }
    }

    /// Independent substream `stream` of `seed`. Distinct stream indices
    /// yield decorrelated sequences; the pair fully determines the draws.
    pub fn stream(seed: u64, stream: u64) -> Self {
        Self {
            key: mix(mix(seed ^ GOLDEN_GAMMA) ^ stream.wrapping_mul(0xD134_2543_DE82_EF95)),
            counter: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)));
        self.counter += 1;
        out
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal draw via Box-Muller; consumes exactly two uniforms.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1], keeps the log finite
        let u2 = self.next_f64();
        fmath::sqrt(-2.0 * fmath::ln(u1)) * fmath::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// Tensor filled with scaled normal draws.
    pub fn normal_tensor(&mut self, shape: Vec<usize>, std: f64) -> Tensor {
        let n: usize = shape.iter().product();
        let mut t = Tensor::zeros(shape);
        debug_assert_eq!(t.len(), n);
        for v in t.data_mut() {
            *v = std * self.normal();
        }
        t
    }
}
