//! The sawbridge `X(t) = t - 1(t >= U)` on a midpoint grid, its autocorrelation,
//! and its Karhunen-Loeve expansion in the sine basis.
//!
//! Grid convention: `t_i = (i + 1/2) / n` for `i = 0..n`. Inner products are
//! midpoint Riemann sums `(1/n) * sum_i a_i b_i`. Sampled sines on this grid are
//! exactly orthonormal for `k < n` (they are the DST-II basis).
//!
//! With the midpoint grid a realization is determined by how many grid points lie
//! strictly below `U`, so there are `n + 1` distinct discretized realizations.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{domain, Error, Result};

/// Grid abscissa `t_i`.
#[inline]
pub fn grid_point(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// All grid abscissae for a grid of size `n`.
pub fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| grid_point(i, n)).collect()
}

/// A function on `[0, 1]` sampled on the midpoint grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSignal {
    values: Vec<f64>,
}

impl GridSignal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return domain("grid signal needs at least one sample");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("grid signal sample {i} is not finite"));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0);
        Self { values: vec![0.0; n] }
    }

    /// Samples `f(t_i)`.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..n).map(|i| f(grid_point(i, n))).collect())
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Midpoint-rule approximation of `integral_0^1 self(t) other(t) dt`.
    pub fn inner(&self, other: &GridSignal) -> Result<f64> {
        self.check_len(other)?;
        Ok(dot(&self.values, &other.values) / self.n() as f64)
    }

    /// Grid-mean squared error, the discrete counterpart of `integral (x - y)^2 dt`.
    pub fn mse(&self, other: &GridSignal) -> Result<f64> {
        self.check_len(other)?;
        Ok(grid_mse(&self.values, &other.values))
    }

    fn check_len(&self, other: &GridSignal) -> Result<()> {
        if self.n() != other.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                actual: other.n(),
                context: "grid signal length",
            });
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn grid_mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// One sawbridge path: the jump time and the sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SawbridgeRealization {
    pub u: f64,
    pub signal: GridSignal,
}

/// Number of grid points strictly below `u`; realizations with equal index are
/// identical on the grid.
pub fn jump_index(u: f64, n: usize) -> usize {
    // t_i >= u  <=>  i >= u*n - 1/2
    let j = (u * n as f64 - 0.5).ceil();
    j.clamp(0.0, n as f64) as usize
}

/// Grid values of the realization with the given jump index.
pub fn realization_from_index(j: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = grid_point(i, n);
            if i >= j {
                t - 1.0
            } else {
                t
            }
        })
        .collect()
}

/// Samples `X(t_i) = t_i - 1(t_i >= u)`.
pub fn sample_sawbridge(u: f64, n: usize) -> Result<SawbridgeRealization> {
    if !(0.0..=1.0).contains(&u) {
        return domain(format!("jump time u = {u} outside [0, 1]"));
    }
    if n == 0 {
        return domain("grid size must be positive");
    }
    let values = (0..n)
        .map(|i| {
            let t = grid_point(i, n);
            if t >= u {
                t - 1.0
            } else {
                t
            }
        })
        .collect();
    Ok(SawbridgeRealization {
        u,
        signal: GridSignal { values },
    })
}

/// `K(s, t) = min(s, t) - s t`.
pub fn autocorrelation(s: f64, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
        return domain(format!("autocorrelation arguments ({s}, {t}) outside [0, 1]"));
    }
    Ok(s.min(t) - s * t)
}

/// `lambda_k = 1 / (pi^2 k^2)`.
pub fn eigenvalue(k: usize) -> f64 {
    let kf = k as f64;
    1.0 / (PI * PI * kf * kf)
}

/// `phi_k(t) = sqrt(2) sin(pi k t)`.
pub fn eigenfunction(k: usize, t: f64) -> f64 {
    SQRT_2 * (PI * k as f64 * t).sin()
}

/// `sum_{j=1..=k} lambda_j`.
pub fn eigenvalue_partial_sum(k: usize) -> f64 {
    // small terms first
    (1..=k).rev().map(eigenvalue).sum()
}

/// `sum_{j>k} lambda_j`, the energy left after keeping `k` KLT terms.
pub fn eigenvalue_tail(k: usize) -> f64 {
    const DIRECT: usize = 32;
    let start = (k + 1).max(DIRECT);
    let m = start as f64;
    // Euler-Maclaurin for sum_{j>=m} 1/j^2
    let em = 1.0 / m + 0.5 / (m * m) + 1.0 / (6.0 * m.powi(3)) - 1.0 / (30.0 * m.powi(5))
        + 1.0 / (42.0 * m.powi(7));
    let direct: f64 = (k + 1..start).rev().map(|j| 1.0 / (j as f64 * j as f64)).sum();
    (direct + em) / (PI * PI)
}

/// The first `k_max` eigenpairs of the sawbridge autocorrelation, with the
/// eigenfunctions sampled on a grid of size `n`.
#[derive(Debug, Clone)]
pub struct KltBasis {
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<GridSignal>,
}

impl KltBasis {
    pub const DEFAULT_K_MAX: usize = 64;

    pub fn new(k_max: usize, n: usize) -> Result<Self> {
        if k_max == 0 || n == 0 {
            return domain("basis needs k_max >= 1 and n >= 1");
        }
        let eigenvalues = (1..=k_max).map(eigenvalue).collect();
        let eigenfunctions = (1..=k_max)
            .map(|k| GridSignal::from_fn(n, |t| eigenfunction(k, t)))
            .collect::<Result<_>>()?;
        Ok(Self {
            eigenvalues,
            eigenfunctions,
        })
    }

    pub fn k_max(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.eigenfunctions[0].n()
    }

    /// `lambda_1, ..., lambda_{k_max}`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `phi_k` on the grid, for `k` in `1..=k_max`.
    pub fn eigenfunction(&self, k: usize) -> &GridSignal {
        &self.eigenfunctions[k - 1]
    }
}

/// KLT coefficients `Y_1, Y_2, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct KltCoefficients(pub Vec<f64>);

impl KltCoefficients {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Closed-form coefficients of the realization with jump time `u`.
    pub fn analytic(u: f64, k_max: usize) -> Result<Self> {
        (1..=k_max)
            .map(|k| klt_coefficient_analytic(k, u))
            .collect::<Result<_>>()
            .map(Self)
    }

    /// Grid-quadrature coefficients of `x` against the basis.
    pub fn numeric(x: &GridSignal, basis: &KltBasis) -> Result<Self> {
        (1..=basis.k_max())
            .map(|k| x.inner(basis.eigenfunction(k)))
            .collect::<Result<_>>()
            .map(Self)
    }
}

/// `Y_k = -sqrt(2 lambda_k) cos(pi k u)`.
pub fn klt_coefficient_analytic(k: usize, u: f64) -> Result<f64> {
    if k == 0 {
        return domain("KLT index starts at 1");
    }
    if !(0.0..=1.0).contains(&u) {
        return domain(format!("jump time u = {u} outside [0, 1]"));
    }
    Ok(-(2.0 * eigenvalue(k)).sqrt() * (PI * k as f64 * u).cos())
}

/// `(1/n) sum_i x_i phi_k(t_i)`.
pub fn klt_coefficient_numeric(x: &GridSignal, k: usize) -> Result<f64> {
    if k == 0 {
        return domain("KLT index starts at 1");
    }
    let n = x.n();
    let acc: f64 = x
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * eigenfunction(k, grid_point(i, n)))
        .sum();
    Ok(acc / n as f64)
}

/// Partial sum `sum_k Y_k phi_k` on the basis grid.
pub fn klt_reconstruct(coeffs: &KltCoefficients, basis: &KltBasis) -> Result<GridSignal> {
    if coeffs.len() > basis.k_max() {
        return Err(Error::Dimension {
            expected: basis.k_max(),
            actual: coeffs.len(),
            context: "coefficients exceed basis size",
        });
    }
    let mut out = vec![0.0; basis.n()];
    for (k, &y) in coeffs.0.iter().enumerate() {
        if y == 0.0 {
            continue;
        }
        for (o, p) in out.iter_mut().zip(basis.eigenfunction(k + 1).values()) {
            *o += y * p;
        }
    }
    GridSignal::new(out)
}
