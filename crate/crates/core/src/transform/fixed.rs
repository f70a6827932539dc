//! Fixed orthonormal bases on `n` grid points, returned as `n x d` matrices whose
//! columns are the basis vectors (Euclidean orthonormal, `Q^T Q = I`).

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::process::grid_point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedKind {
    /// DCT-II, lowest frequency first.
    Dct2,
    /// Periodized Daubechies 4-tap wavelet, full Mallat decomposition, coarsest first.
    Daub4,
    /// Sampled sawbridge KLT eigenfunctions `sin(pi k t)`, `k = 1, 2, ...`.
    KltSampled,
}

impl FixedKind {
    pub const ALL: [FixedKind; 3] = [FixedKind::Dct2, FixedKind::Daub4, FixedKind::KltSampled];

    pub fn as_str(self) -> &'static str {
        match self {
            FixedKind::Dct2 => "dct2",
            FixedKind::Daub4 => "daub4",
            FixedKind::KltSampled => "klt-sampled",
        }
    }
}

impl fmt::Display for FixedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FixedKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dct2" => Ok(FixedKind::Dct2),
            "daub4" => Ok(FixedKind::Daub4),
            "klt-sampled" => Ok(FixedKind::KltSampled),
            other => domain(format!("unsupported fixed transform `{other}`")),
        }
    }
}

/// First `d` basis vectors of the named transform on `n` points.
pub fn fixed_transform(kind: FixedKind, n: usize, d: usize) -> Result<Array2<f64>> {
    if n == 0 || d == 0 {
        return domain("transform needs n >= 1 and d >= 1");
    }
    if d > n {
        return domain(format!("latent dims {d} exceed grid size {n}"));
    }
    match kind {
        FixedKind::Dct2 => Ok(dct2(n, d)),
        FixedKind::KltSampled => Ok(klt_sampled(n, d)),
        FixedKind::Daub4 => {
            if !n.is_power_of_two() {
                return domain(format!("daub4 needs a power-of-two grid, got {n}"));
            }
            let full = daub4_matrix(n);
            Ok(full.slice(ndarray::s![.., ..d]).to_owned())
        }
    }
}

fn dct2(n: usize, d: usize) -> Array2<f64> {
    let nf = n as f64;
    Array2::from_shape_fn((n, d), |(i, k)| {
        let c = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        c * (PI * k as f64 * (i as f64 + 0.5) / nf).cos()
    })
}

fn klt_sampled(n: usize, d: usize) -> Array2<f64> {
    let mut q = Array2::from_shape_fn((n, d), |(i, k)| SQRT_2 * (PI * (k + 1) as f64 * grid_point(i, n)).sin());
    for mut col in q.columns_mut() {
        let norm = col.dot(&col).sqrt();
        col /= norm;
    }
    q
}

fn daub4_filters() -> ([f64; 4], [f64; 4]) {
    let s3 = 3f64.sqrt();
    let norm = 4.0 * SQRT_2;
    let h = [(1.0 + s3) / norm, (3.0 + s3) / norm, (3.0 - s3) / norm, (1.0 - s3) / norm];
    let g = [h[3], -h[2], h[1], -h[0]];
    (h, g)
}

/// One periodized analysis step: `len` inputs to `len/2` approximation and
/// `len/2` detail coefficients.
fn daub4_step(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (h, g) = daub4_filters();
    let len = x.len();
    let half = len / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        for m in 0..4 {
            let v = x[(2 * k + m) % len];
            a[k] += h[m] * v;
            d[k] += g[m] * v;
        }
    }
    (a, d)
}

/// Full periodized Daub4 analysis of `x` (power-of-two length): the final
/// approximation coefficient, then detail bands from coarsest to finest.
pub fn daub4_forward(x: &[f64]) -> Vec<f64> {
    let mut bands: Vec<Vec<f64>> = Vec::new();
    let mut approx = x.to_vec();
    while approx.len() > 1 {
        let (a, d) = daub4_step(&approx);
        bands.push(d);
        approx = a;
    }
    let mut out = approx;
    for band in bands.into_iter().rev() {
        out.extend(band);
    }
    out
}

fn daub4_matrix(n: usize) -> Array2<f64> {
    // column j of Q is row j of the analysis operator
    let mut q = Array2::zeros((n, n));
    let mut e = vec![0.0; n];
    for i in 0..n {
        e[i] = 1.0;
        for (j, v) in daub4_forward(&e).into_iter().enumerate() {
            q[[i, j]] = v;
        }
        e[i] = 0.0;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_gram_error(q: &Array2<f64>) -> f64 {
        let g = q.t().dot(q);
        let mut worst = 0.0f64;
        for ((i, j), v) in g.indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - want).abs());
        }
        worst
    }

    #[test]
    fn bases_are_orthonormal() {
        assert!(max_gram_error(&fixed_transform(FixedKind::Dct2, 64, 64).unwrap()) < 1e-12);
        assert!(max_gram_error(&fixed_transform(FixedKind::Daub4, 64, 64).unwrap()) < 1e-12);
        assert!(max_gram_error(&fixed_transform(FixedKind::KltSampled, 64, 64).unwrap()) < 1e-12);
        assert!(max_gram_error(&fixed_transform(FixedKind::Dct2, 1024, 1024).unwrap()) < 1e-12);
    }

    #[test]
    fn klt_first_column_is_normalized_sine() {
        let n = 1024;
        let q = fixed_transform(FixedKind::KltSampled, n, 4).unwrap();
        let raw: Vec<f64> = (0..n).map(|i| SQRT_2 * (PI * grid_point(i, n)).sin()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (i, r) in raw.iter().enumerate() {
            assert!((q[[i, 0]] - r / norm).abs() <= 1e-6);
        }
    }

    #[test]
    fn daub4_kills_constants() {
        let out = daub4_forward(&vec![0.7; 256]);
        assert!(out[0].abs() > 1.0);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn domain_errors() {
        assert!(fixed_transform(FixedKind::Daub4, 48, 8).is_err());
        assert!(fixed_transform(FixedKind::Dct2, 8, 9).is_err());
        assert!("haar".parse::<FixedKind>().is_err());
        assert_eq!("daub4".parse::<FixedKind>().unwrap(), FixedKind::Daub4);
    }
}
