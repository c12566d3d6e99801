//! Seeded random source.
//!
//! The generator is ChaCha8 (via `rand_chacha`), which produces the same
//! stream on every platform. Independent streams for data generation,
//! initialization and shuffling are selected with the ChaCha stream id, so
//! the tuple (seed, stream, word position) fully describes the state and can
//! be checkpointed.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: &RngState) -> Self {
        let mut rng = Self::with_stream(state.seed, state.stream);
        rng.inner.set_word_pos(state.word_pos);
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        // Lemire's multiply-shift; the bias is < n / 2^64.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal by Box-Muller, one draw per two uniforms.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// i.i.d. normal draws of the given shape.
pub fn seeded_normal<S: Scalar>(rng: &mut Rng, shape: &[usize], mean: S, std: S) -> Result<Tensor<S>> {
    if !(std >= S::zero()) {
        return Err(Error::Invalid(format!("negative std {std}")));
    }
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| mean + std * S::of(rng.standard_normal())).collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_is_constant() {
        let mut rng = Rng::new(1);
        let t = seeded_normal(&mut rng, &[3, 4], 2.5f64, 0.0).unwrap();
        assert!(t.data().iter().all(|&x| x == 2.5));
    }

    #[test]
    fn negative_std_rejected() {
        let mut rng = Rng::new(1);
        assert!(seeded_normal(&mut rng, &[2], 0.0f64, -1.0).is_err());
    }

    #[test]
    fn same_seed_same_tensor() {
        let a = seeded_normal(&mut Rng::new(42), &[64], 0.0f64, 1.0).unwrap();
        let b = seeded_normal(&mut Rng::new(42), &[64], 0.0f64, 1.0).unwrap();
        assert_eq!(a, b);
        let c = seeded_normal(&mut Rng::new(43), &[64], 0.0f64, 1.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_moments() {
        let mut rng = Rng::new(7);
        let t = seeded_normal(&mut rng, &[100_000], 0.0f64, 1.0).unwrap();
        let n = t.len() as f64;
        let mean = t.sum() / n;
        let var = t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn state_round_trip_resumes_stream() {
        let mut a = Rng::with_stream(9, 3);
        for _ in 0..17 {
            a.next_u64();
        }
        let mut b = Rng::from_state(&a.state());
        for _ in 0..50 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = Rng::with_stream(9, 0);
        let mut b = Rng::with_stream(9, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = Rng::new(3);
        for n in 1..50 {
            assert!(rng.below(n) < n);
        }
    }
}
