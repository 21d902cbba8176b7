use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SneError};
use crate::numerics::tensor::Tensor2;

/// Seeded random stream. Identical seed and stream id give the identical
/// sequence, independent of how other streams are interleaved.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream { seed, stream, inner }
    }

    /// Independent stream derived from the same seed.
    pub fn fork(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.random_range(lo..hi)
    }

    pub fn uniform_tensor(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor2 {
        Tensor2::from_fn(rows, cols, |_, _| self.uniform(lo, hi))
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// I.i.d. `N(mu, sigma2)` samples. A zero variance returns the constant `mu`.
    pub fn sample_gaussian(&mut self, mu: f64, sigma2: f64, rows: usize, cols: usize) -> Result<Tensor2> {
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(SneError::Parameter(format!("variance must be non-negative, got {sigma2}")));
        }
        if sigma2 == 0.0 {
            return Ok(Tensor2::filled(rows, cols, mu));
        }
        let sd = sigma2.sqrt();
        Ok(Tensor2::from_fn(rows, cols, |_, _| mu + sd * self.standard_normal()))
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.random_range(0..=i);
            items.swap(i, j);
        }
    }
}
