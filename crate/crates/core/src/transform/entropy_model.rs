//! Factorized entropy model: one probability table per latent dimension over the
//! integers `-B..=B`, parameterized by unconstrained logits.

use ndarray::Array2;

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedEntropyModel {
    half_width: usize,
    /// `dims x (2B + 1)`; column `j` is the bin `j - B`.
    logits: Array2<f64>,
}

impl FactorizedEntropyModel {
    pub const DEFAULT_HALF_WIDTH: usize = 64;

    pub fn from_logits(half_width: usize, logits: Array2<f64>) -> Result<Self> {
        if logits.ncols() != 2 * half_width + 1 {
            return domain(format!(
                "logit table has {} bins, expected {}",
                logits.ncols(),
                2 * half_width + 1
            ));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return domain("entropy model logits must be finite");
        }
        Ok(Self { half_width, logits })
    }

    /// Same mass on every bin.
    pub fn uniform(dims: usize, half_width: usize) -> Self {
        Self {
            half_width,
            logits: Array2::zeros((dims, 2 * half_width + 1)),
        }
    }

    /// Logits falling linearly with `|bin|`, `slope` nats per bin.
    pub fn triangular(dims: usize, half_width: usize, slope: f64) -> Self {
        let b = half_width as f64;
        Self {
            half_width,
            logits: Array2::from_shape_fn((dims, 2 * half_width + 1), |(_, j)| -slope * (j as f64 - b).abs()),
        }
    }

    /// Maximum-likelihood fit to per-dimension histograms (`counts[dim][bin]`),
    /// with a small pseudo-count so every bin keeps positive mass.
    pub fn fit_histograms(half_width: usize, counts: &Array2<f64>) -> Result<Self> {
        let total_bins = 2 * half_width + 1;
        if counts.ncols() != total_bins {
            return domain("histogram width does not match the support");
        }
        let logits = counts.mapv(|c| (c + 1e-9).ln());
        Self::from_logits(half_width, logits)
    }

    pub fn dims(&self) -> usize {
        self.logits.nrows()
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn bins(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut Array2<f64> {
        &mut self.logits
    }

    /// Normalized masses, `dims x (2B + 1)`.
    pub fn pmf(&self) -> Array2<f64> {
        let mut p = self.logits.clone();
        for mut row in p.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        p
    }

    /// `log2` masses, `dims x (2B + 1)`, computed stably from the logits.
    pub fn log2_pmf(&self) -> Array2<f64> {
        let mut lp = self.logits.clone();
        for mut row in lp.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| (v - lse) / std::f64::consts::LN_2);
        }
        lp
    }

    /// Column of bin `q` (which must lie in `-B..=B`).
    #[inline]
    pub fn column(&self, q: i64) -> usize {
        (q + self.half_width as i64) as usize
    }
}

/// Round-half-to-even quantization with clamping to `-B..=B`; returns the
/// indices and how many values were clamped.
pub fn quantize(latents: &[f64], half_width: usize) -> (Vec<i64>, usize) {
    let b = half_width as i64;
    let mut clamped = 0;
    let q = latents
        .iter()
        .map(|&v| {
            let r = v.round_ties_even();
            let r = if r.is_finite() { r as i64 } else if r > 0.0 { i64::MAX } else { i64::MIN };
            if r.abs() > b {
                clamped += 1;
                r.clamp(-b, b)
            } else {
                r
            }
        })
        .collect();
    (q, clamped)
}
