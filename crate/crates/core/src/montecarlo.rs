//! Seeded Monte Carlo draws and running moments.

use rand::Rng;
use rayon::prelude::*;

use crate::rng::{self, Substream};

/// Draws `total` jump times `U ~ Uniform[0, 1]` from the source substream of
/// `seed`. The sequence is fixed by `seed` and `total` whatever the worker count.
pub fn jump_times(seed: u64, total: usize) -> Vec<f64> {
    let chunks: Vec<_> = rng::chunk_sizes(total).collect();
    chunks
        .into_par_iter()
        .map(|(chunk, len)| {
            let mut r = rng::stream(seed, Substream::SourceU, chunk);
            (0..len).map(|_| r.random::<f64>()).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Count, mean and variance accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.push_weighted(x, 1.0);
    }

    /// Adds `weight` copies of `x`.
    pub fn push_weighted(&mut self, x: f64, weight: f64) {
        self.count += weight;
        self.sum += weight * x;
        self.sum_sq += weight * x * x;
    }

    pub fn merge(mut self, other: Moments) -> Moments {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2.0 {
            return 0.0;
        }
        let m = self.mean();
        ((self.sum_sq - self.count * m * m) / (self.count - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count).sqrt()
    }
}

/// Plug-in entropy in bits of a histogram.
pub fn histogram_entropy_bits<I: IntoIterator<Item = f64>>(counts: I) -> f64 {
    let counts: Vec<f64> = counts.into_iter().filter(|&c| c > 0.0).collect();
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    -counts
        .iter()
        .map(|c| {
            let p = c / total;
            p * p.log2()
        })
        .sum::<f64>()
}
