//! The optimal entropy-distortion tradeoff of the sawbridge and the interval
//! encoders that achieve it.
//!
//! Every encoder of the sawbridge is an encoder of its jump time `U`, and the
//! best cells are intervals. A cell `[a, b]` decoded to its conditional mean
//! costs `(b - a)^2 / 6` of distortion, so for a target `delta` the optimum uses
//! `m` cells of width `p` and one remainder cell `q = 1 - m p` with
//! `m p^2 + q^2 = 6 delta`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::montecarlo::{self, Moments};
use crate::process::{jump_index, realization_from_index, GridSignal};

/// Distortion of the zero-rate code, `integral_0^1 t(1 - t) dt`.
pub const SOURCE_VARIANCE: f64 = 1.0 / 6.0;

/// Where a point on an entropy-distortion plane came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Analytic,
    Lce,
    Empirical,
    Bound,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Analytic => "analytic",
            Provenance::Lce => "lce",
            Provenance::Empirical => "empirical",
            Provenance::Bound => "bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyDistortionPoint {
    pub entropy_bits: f64,
    pub distortion: f64,
    pub provenance: Provenance,
}

/// Interval quantizer of `U`: `m` cells of width `p` followed by a remainder
/// of width `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalQuantizer {
    pub m: usize,
    pub p: f64,
    pub q: f64,
}

fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

impl OptimalQuantizer {
    /// The optimal quantizer for `0 < delta < 1/6`.
    pub fn for_distortion(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < SOURCE_VARIANCE) {
            return domain(format!("quantizer needs 0 < delta < 1/6, got {delta}"));
        }
        let target = 6.0 * delta;
        let m0 = ((1.0 / target).floor() as usize).max(1);
        // floor(1/target) can be off by one at exact kinks; validate neighbours
        for m in [m0, m0 + 1, m0.saturating_sub(1)] {
            if m == 0 {
                continue;
            }
            if let Some(p) = solve_cell_width(m, target) {
                let q = (1.0 - m as f64 * p).max(0.0);
                return Ok(Self { m, p, q });
            }
        }
        unreachable!("every target in (0, 1) lies in some bracket")
    }

    pub fn distortion(&self) -> f64 {
        (self.m as f64 * self.p * self.p + self.q * self.q) / 6.0
    }

    pub fn entropy_bits(&self) -> f64 {
        -(self.m as f64) * xlog2x(self.p) - xlog2x(self.q)
    }

    /// Cell boundaries `0, p, 2p, ..., mp, 1` (the last cell is dropped if empty).
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b: Vec<f64> = (0..=self.m).map(|i| i as f64 * self.p).collect();
        if self.q > 0.0 {
            b.push(1.0);
        } else {
            *b.last_mut().unwrap() = 1.0;
        }
        b
    }
}

/// Root of `m p^2 + (1 - m p)^2 = target` in `[1/(m+1), 1/m]`, if there is one.
fn solve_cell_width(m: usize, target: f64) -> Option<f64> {
    let mf = m as f64;
    let lo = 1.0 / (mf + 1.0);
    let hi = 1.0 / mf;
    // g is increasing on the bracket and maps it onto [1/(m+1), 1/m]
    let slack = 4.0 * f64::EPSILON;
    if target < lo * (1.0 - slack) || target > hi * (1.0 + slack) {
        return None;
    }
    // m(m+1) p^2 - 2 m p + (1 - target) = 0, vertex at 1/(m+1)
    let disc = mf * (target * (mf + 1.0) - 1.0);
    let p = if disc >= 0.0 {
        lo + disc.sqrt() / (mf * (mf + 1.0))
    } else {
        lo
    };
    if p.is_finite() {
        // rounding may push the root an ulp past the bracket
        Some(p.clamp(lo, hi))
    } else {
        Some(bisect_cell_width(mf, target, lo, hi))
    }
}

fn bisect_cell_width(mf: f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = |p: f64| mf * p * p + (1.0 - mf * p).powi(2) - target;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `H(delta)` in bits: the least entropy of any encoder with distortion at most
/// `delta`.
pub fn entropy_distortion(delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return domain(format!("distortion must be positive, got {delta}"));
    }
    if delta >= SOURCE_VARIANCE {
        return Ok(0.0);
    }
    Ok(OptimalQuantizer::for_distortion(delta)?.entropy_bits())
}

/// Lower convex envelope of `H`: linear interpolation between the points
/// `(1/(6M), log2 M)`.
pub fn lce_entropy_distortion(delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return domain(format!("distortion must be positive, got {delta}"));
    }
    if delta >= SOURCE_VARIANCE {
        return Ok(0.0);
    }
    let m = ((1.0 / (6.0 * delta)).floor() as usize).max(1);
    let mf = m as f64;
    let (d_hi, h_hi) = (1.0 / (6.0 * mf), mf.log2());
    let (d_lo, h_lo) = (1.0 / (6.0 * (mf + 1.0)), (mf + 1.0).log2());
    let w = ((d_hi - delta) / (d_hi - d_lo)).clamp(0.0, 1.0);
    Ok(h_hi + w * (h_lo - h_hi))
}

/// Index of the equal-width cell containing `u`.
pub fn m_encode(u: f64, m_cells: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&u) {
        return domain(format!("jump time u = {u} outside [0, 1]"));
    }
    if m_cells == 0 {
        return domain("encoder needs at least one cell");
    }
    Ok(((u * m_cells as f64).floor() as usize).min(m_cells - 1))
}

/// `E[X(t_i) | U in [a, b]] = t_i - clamp((t_i - a)/(b - a), 0, 1)`.
pub fn conditional_mean_decode(a: f64, b: f64, n: usize) -> Result<GridSignal> {
    if !(0.0 <= a && a < b && b <= 1.0) {
        return domain(format!("decoder cell [{a}, {b}] is not a proper subinterval of [0, 1]"));
    }
    if n == 0 {
        return domain("grid size must be positive");
    }
    GridSignal::from_fn(n, |t| t - ((t - a) / (b - a)).clamp(0.0, 1.0))
}

/// Continuum distortion of the uniform `m`-cell encoder, `1/(6m)`.
pub fn m_encoder_distortion(m_cells: usize) -> Result<f64> {
    if m_cells == 0 {
        return domain("encoder needs at least one cell");
    }
    Ok(1.0 / (6.0 * m_cells as f64))
}

/// Monte Carlo grid distortion of the uniform `m`-cell encoder followed by the
/// conditional-mean decoder, over `draws` jump times from `seed`.
///
/// Per-draw distortions depend only on (cell, jump index), so each distinct
/// pair is evaluated once and weighted by its count.
pub fn m_encoder_empirical_distortion(m_cells: usize, n: usize, draws: usize, seed: u64) -> Result<Moments> {
    if m_cells == 0 || n == 0 || draws == 0 {
        return domain("empirical distortion needs m_cells, n and draws >= 1");
    }
    let decoders = (0..m_cells)
        .map(|c| {
            let a = c as f64 / m_cells as f64;
            let b = (c + 1) as f64 / m_cells as f64;
            conditional_mean_decode(a, b, n)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = std::collections::BTreeMap::<(usize, usize), f64>::new();
    for u in montecarlo::jump_times(seed, draws) {
        *counts.entry((m_encode(u, m_cells)?, jump_index(u, n))).or_default() += 1.0;
    }
    let mut moments = Moments::default();
    for ((cell, j), count) in counts {
        let x = realization_from_index(j, n);
        let d = crate::process::grid_mse(&x, decoders[cell].values());
        moments.push_weighted(d, count);
    }
    Ok(moments)
}

/// Log-spaced grid of `count` points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// Grid values of `E[X(t_i) | U in cell]` for every cell of `quantizer`.
pub fn quantizer_reproductions(quantizer: &OptimalQuantizer, n: usize) -> Result<Vec<GridSignal>> {
    quantizer
        .boundaries()
        .windows(2)
        .map(|w| conditional_mean_decode(w[0], w[1], n))
        .collect()
}
