//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by
//! `(seed, stream id)`. Uniforms take the top 53 bits of a 64-bit word,
//! integers below a bound use rejection on the raw word, and normals use the
//! Marsaglia polar method. None of this depends on `rand`'s distribution
//! code, so the draws are stable across crate versions.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids. Matrix `A_i` uses stream `i` (0-based), so the fixed ids sit
/// far above any realistic agent count.
pub mod streams {
    pub const SUPPORT: u64 = 1 << 40;
    pub const NOISE: u64 = (1 << 40) + 1;
    pub const GRAPH: u64 = (1 << 40) + 2;
    pub const POWER_START: u64 = (1 << 40) + 3;
}

pub struct Stream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        // Accept only the largest prefix of u64 whose length is a multiple of `bound`.
        let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % bound;
            }
        }
    }

    /// Standard normal via the polar method; the second variate of each pair
    /// is cached and returned by the next call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * factor);
                return u * factor;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map({
            let mut s = Stream::new(7, 3);
            move |_| s.next_u64()
        }).collect();
        let b: Vec<u64> = (0..4).map({
            let mut s = Stream::new(7, 3);
            move |_| s.next_u64()
        }).collect();
        let c: Vec<u64> = (0..4).map({
            let mut s = Stream::new(7, 4);
            move |_| s.next_u64()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn normal_moments() {
        let mut s = Stream::new(1, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn below_stays_in_range() {
        let mut s = Stream::new(2, 0);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            let k = s.below(7) as usize;
            seen[k] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }
}
