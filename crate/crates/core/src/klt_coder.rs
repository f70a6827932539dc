//! Dithered uniform quantization of the leading KLT coefficients.
//!
//! For a target distortion `delta` the coder keeps `K = ceil(2 / (pi^2 delta))`
//! coefficients and quantizes each with step `sqrt(12 gamma) / K`, `gamma` being
//! the root of `atan(pi sqrt(gamma)) = 1 / (pi sqrt(gamma))`. The decoder removes
//! the dither and shrinks each coefficient by its Wiener factor.
//!
//! The separately coded rate `hbar(delta)` is a sum of differential entropies of
//! the arcsine law smoothed by a uniform, computed by adaptive quadrature.

use std::f64::consts::{E, PI, SQRT_2};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::montecarlo::{histogram_entropy_bits, Moments};
use crate::optimal::SOURCE_VARIANCE;
use crate::process::{self, eigenvalue, GridSignal, KltBasis, KltCoefficients};
use crate::quadrature::{integrate, integrate_breakpoints, Tolerance};
use crate::rng::{self, Substream};

/// Root `z` of `z atan(z) = 1`, by bisection on `(0, 10]`.
fn fixed_point_z() -> f64 {
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if mid * mid.atan() < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `gamma` with `atan(pi sqrt(gamma)) = 1 / (pi sqrt(gamma))`.
pub fn solve_gamma() -> f64 {
    let z = fixed_point_z();
    z * z / (PI * PI)
}

/// Constants of the coder for one target distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KltCoderParams {
    pub delta_target: f64,
    /// `D = delta^2 pi^2 / 4`.
    pub d_const: f64,
    /// Number of quantized coefficients `K`.
    pub k_coeffs: usize,
    /// Quantizer step `sqrt(12 gamma) / K`.
    pub step: f64,
    pub gamma: f64,
}

pub fn coder_params(delta: f64) -> Result<KltCoderParams> {
    if !(delta > 0.0 && delta < SOURCE_VARIANCE) {
        return domain(format!("KLT coder needs 0 < delta < 1/6, got {delta}"));
    }
    let gamma = solve_gamma();
    let d_const = delta * delta * PI * PI / 4.0;
    let k_coeffs = (1.0 / (PI * d_const.sqrt())).ceil() as usize;
    let step = (12.0 * gamma).sqrt() / k_coeffs as f64;
    Ok(KltCoderParams {
        delta_target: delta,
        d_const,
        k_coeffs,
        step,
        gamma,
    })
}

impl KltCoderParams {
    /// Wiener factor `lambda_l / (lambda_l + step^2 / 12)` for coefficient `l >= 1`.
    pub fn shrink(&self, l: usize) -> f64 {
        let lam = eigenvalue(l);
        lam / (lam + self.step * self.step / 12.0)
    }

    /// Expected distortion of the coder from its closed form: per-coefficient
    /// Wiener errors plus the untouched tail.
    pub fn expected_distortion(&self) -> f64 {
        let noise = self.step * self.step / 12.0;
        let kept: f64 = (1..=self.k_coeffs)
            .map(|l| {
                let lam = eigenvalue(l);
                lam * noise / (lam + noise)
            })
            .sum();
        kept + process::eigenvalue_tail(self.k_coeffs)
    }
}

/// Quantization indices together with the dither that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DitheredCodeword {
    pub indices: Vec<i64>,
    pub dither: Vec<f64>,
}

/// Round half to even.
#[inline]
pub fn round_half_even(x: f64) -> f64 {
    x.round_ties_even()
}

/// `index_l = round(Y_l / step + U_l)` for the first `K` coefficients.
pub fn dithered_encode(coeffs: &KltCoefficients, dither: &[f64], params: &KltCoderParams) -> Result<DitheredCodeword> {
    let k = params.k_coeffs;
    if dither.len() != k {
        return Err(Error::Dimension {
            expected: k,
            actual: dither.len(),
            context: "dither length",
        });
    }
    if coeffs.len() < k {
        return Err(Error::Dimension {
            expected: k,
            actual: coeffs.len(),
            context: "coefficients shorter than K",
        });
    }
    if let Some(u) = dither.iter().find(|u| !(-0.5..=0.5).contains(*u)) {
        return domain(format!("dither {u} outside [-1/2, 1/2]"));
    }
    let indices = coeffs.0[..k]
        .iter()
        .zip(dither)
        .map(|(y, u)| round_half_even(y / params.step + u) as i64)
        .collect();
    Ok(DitheredCodeword {
        indices,
        dither: dither.to_vec(),
    })
}

/// Reconstructed coefficients `shrink_l (index_l - U_l) step`, zero past `K`.
pub fn decoded_coefficients(cw: &DitheredCodeword, params: &KltCoderParams) -> KltCoefficients {
    KltCoefficients(
        cw.indices
            .iter()
            .zip(&cw.dither)
            .enumerate()
            .map(|(i, (&q, &u))| params.shrink(i + 1) * (q as f64 - u) * params.step)
            .collect(),
    )
}

pub fn dithered_decode(cw: &DitheredCodeword, params: &KltCoderParams, basis: &KltBasis) -> Result<GridSignal> {
    if cw.indices.len() != params.k_coeffs || cw.dither.len() != params.k_coeffs {
        return Err(Error::Dimension {
            expected: params.k_coeffs,
            actual: cw.indices.len(),
            context: "codeword length",
        });
    }
    process::klt_reconstruct(&decoded_coefficients(cw, params), basis)
}

/// Arcsine CDF on `[-sqrt 2, sqrt 2]`.
fn arcsine_cdf(x: f64) -> f64 {
    0.5 + (x / SQRT_2).clamp(-1.0, 1.0).asin() / PI
}

/// Density of the arcsine law on `[-sqrt 2, sqrt 2]` plus an independent
/// uniform on `[-w/2, w/2]`.
pub fn arcsine_uniform_density(y: f64, w: f64) -> f64 {
    ((arcsine_cdf(y + 0.5 * w) - arcsine_cdf(y - 0.5 * w)) / w).max(0.0)
}

const ENTROPY_TOL: f64 = 1e-8;

fn neg_g_log2_g(y: f64, w: f64) -> f64 {
    let g = arcsine_uniform_density(y, w);
    if g > 0.0 {
        -g * g.log2()
    } else {
        0.0
    }
}

fn entropy_breakpoints(w: f64) -> Vec<f64> {
    let outer = SQRT_2 + 0.5 * w;
    let inner = (SQRT_2 - 0.5 * w).abs();
    let mut pts = vec![-outer, -inner, 0.0, inner, outer];
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Differential entropy in bits of arcsine on `[-sqrt 2, sqrt 2]` convolved with
/// the uniform density of width `w`.
pub fn arcsine_uniform_entropy(w: f64) -> Result<f64> {
    if !(w > 0.0 && w.is_finite()) {
        return domain(format!("uniform width must be positive, got {w}"));
    }
    let q = integrate_breakpoints(|y| neg_g_log2_g(y, w), &entropy_breakpoints(w), Tolerance::relative(ENTROPY_TOL));
    Ok(q.value)
}

/// Same integral over `[0, inf)` doubled, using the evenness of the density.
pub fn arcsine_uniform_entropy_half_line(w: f64) -> Result<f64> {
    if !(w > 0.0 && w.is_finite()) {
        return domain(format!("uniform width must be positive, got {w}"));
    }
    let pts: Vec<f64> = entropy_breakpoints(w).into_iter().filter(|&p| p >= 0.0).collect();
    let q = integrate_breakpoints(|y| neg_g_log2_g(y, w), &pts, Tolerance::relative(ENTROPY_TOL));
    Ok(2.0 * q.value)
}

/// Rate of coefficient `l` out of `k`: `h(s * u_w) - log2 w` with
/// `w = sqrt(12 gamma) pi l / K`.
pub fn hbar_summand(l: usize, k: usize, gamma: f64) -> Result<f64> {
    let w = (12.0 * gamma).sqrt() * PI * l as f64 / k as f64;
    Ok(arcsine_uniform_entropy(w)? - w.log2())
}

/// All `K` summands of `hbar(delta)`.
pub fn hbar_summands(delta: f64) -> Result<Vec<f64>> {
    let params = coder_params(delta)?;
    (1..=params.k_coeffs)
        .into_par_iter()
        .map(|l| hbar_summand(l, params.k_coeffs, params.gamma))
        .collect()
}

/// Entropy in bits of the separately coded dithered KLT coefficients.
pub fn hbar(delta: f64) -> Result<f64> {
    Ok(hbar_summands(delta)?.into_iter().sum())
}

/// `lim_{delta -> 0} delta * hbar(delta)`.
pub fn hbar_asymptotic_constant() -> f64 {
    let root = PI * (12.0 * solve_gamma()).sqrt();
    let q = integrate(
        |x| arcsine_uniform_entropy(root * x).expect("positive width inside (0, 1)"),
        0.0,
        1.0,
        Tolerance::relative(1e-6),
    );
    2.0 / (PI * PI) * (q.value - (root / E).log2())
}

/// Which coefficients a Monte Carlo run feeds the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientSource {
    /// Closed form `-sqrt(2 lambda_l) cos(pi l U)`.
    Analytic,
    /// Grid quadrature of the sampled realization; also measures grid distortion.
    Grid { n: usize },
}

/// Monte Carlo summary of the dithered coder.
#[derive(Debug, Clone)]
pub struct KltMonteCarlo {
    pub params: KltCoderParams,
    /// Grid distortion per draw; empty for [`CoefficientSource::Analytic`].
    pub distortion: Moments,
    /// Binned estimate of `H(index_l | U_l)` per coefficient, in bits.
    pub conditional_entropy: Vec<f64>,
    pub draws: usize,
}

impl KltMonteCarlo {
    pub fn entropy_bits(&self) -> f64 {
        self.conditional_entropy.iter().sum()
    }
}

/// Number of dither bins used by the conditional-entropy estimator.
pub const DITHER_BINS: usize = 64;

struct Histograms {
    offset: Vec<i64>,
    width: Vec<usize>,
    // [coefficient][bin * width + (index - offset)]
    counts: Vec<Vec<u64>>,
}

impl Histograms {
    fn new(params: &KltCoderParams) -> Self {
        let mut offset = Vec::new();
        let mut width = Vec::new();
        for l in 1..=params.k_coeffs {
            // |Y_l| <= sqrt(2 lambda_l); grid coefficients may overshoot slightly
            let amp = (2.0 * eigenvalue(l)).sqrt() * 1.1 + 0.05;
            let top = (amp / params.step).ceil() as i64 + 2;
            offset.push(-top);
            width.push((2 * top + 1) as usize);
        }
        let counts = width.iter().map(|w| vec![0; w * DITHER_BINS]).collect();
        Self { offset, width, counts }
    }

    fn record(&mut self, l: usize, index: i64, dither: f64) {
        let bin = (((dither + 0.5) * DITHER_BINS as f64) as usize).min(DITHER_BINS - 1);
        let slot = (index - self.offset[l]).clamp(0, self.width[l] as i64 - 1) as usize;
        self.counts[l][bin * self.width[l] + slot] += 1;
    }

    fn merge(mut self, other: Histograms) -> Self {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self
    }

    fn conditional_entropy(&self, draws: usize) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.width)
            .map(|(c, &w)| {
                c.chunks(w)
                    .map(|row| {
                        let n: u64 = row.iter().sum();
                        n as f64 / draws as f64 * histogram_entropy_bits(row.iter().map(|&x| x as f64))
                    })
                    .sum()
            })
            .collect()
    }
}

/// Runs the dithered coder on `draws` realizations from `seed`.
pub fn klt_monte_carlo(delta: f64, draws: usize, seed: u64, source: CoefficientSource) -> Result<KltMonteCarlo> {
    let params = coder_params(delta)?;
    if draws == 0 {
        return domain("Monte Carlo needs at least one draw");
    }
    let k = params.k_coeffs;
    let basis = match source {
        CoefficientSource::Grid { n } => Some(KltBasis::new(k.max(KltBasis::DEFAULT_K_MAX), n)?),
        CoefficientSource::Analytic => None,
    };
    let chunks: Vec<_> = rng::chunk_sizes(draws).collect();
    let partials = chunks
        .into_par_iter()
        .map(|(chunk, len)| -> Result<(Moments, Histograms)> {
            let mut u_rng = rng::stream(seed, Substream::SourceU, chunk);
            let mut dither_rngs: Vec<_> = (0..k)
                .map(|l| rng::stream(seed, Substream::Dither, rng::chunk_coefficient_index(chunk, l)))
                .collect();
            let mut moments = Moments::default();
            let mut hist = Histograms::new(&params);
            let mut dither = vec![0.0; k];
            for _ in 0..len {
                let u: f64 = u_rng.random();
                for (d, r) in dither.iter_mut().zip(dither_rngs.iter_mut()) {
                    *d = r.random::<f64>() - 0.5;
                }
                let (coeffs, signal) = match (&basis, source) {
                    (Some(basis), CoefficientSource::Grid { n }) => {
                        let x = process::sample_sawbridge(u, n)?.signal;
                        let c = (1..=k)
                            .map(|l| x.inner(basis.eigenfunction(l)))
                            .collect::<Result<Vec<_>>>()?;
                        (KltCoefficients(c), Some(x))
                    }
                    _ => (KltCoefficients::analytic(u, k)?, None),
                };
                let cw = dithered_encode(&coeffs, &dither, &params)?;
                for (l, (&q, &d)) in cw.indices.iter().zip(&cw.dither).enumerate() {
                    hist.record(l, q, d);
                }
                if let (Some(x), Some(basis)) = (signal, &basis) {
                    let xhat = dithered_decode(&cw, &params, basis)?;
                    moments.push(x.mse(&xhat)?);
                }
            }
            Ok((moments, hist))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut moments = Moments::default();
    let mut hist: Option<Histograms> = None;
    for (m, h) in partials {
        moments = moments.merge(m);
        hist = Some(match hist {
            None => h,
            Some(acc) => acc.merge(h),
        });
    }
    Ok(KltMonteCarlo {
        params,
        distortion: moments,
        conditional_entropy: hist.expect("at least one chunk").conditional_entropy(draws),
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimal::lce_entropy_distortion;
    use crate::optimal::log_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Frozen from the bisection; see `gamma_golden`.
    const GAMMA: f64 = 0.136_888_352_559_425_61;

    #[test]
    fn gamma_fixed_point() {
        let g = solve_gamma();
        let r = PI * g.sqrt();
        assert!((r.atan() - 1.0 / r).abs() <= 1e-12);
        assert!((r.atan() * r - 1.0).abs() <= 1e-10);
        assert!((g - 0.1369).abs() < 5e-4);
        println!("gamma = {g:.17}");
    }

    #[test]
    fn gamma_golden() {
        assert!((solve_gamma() - GAMMA).abs() < 1e-15);
    }

    #[test]
    fn bisection_bracket() {
        assert!((1.0f64 * 1.0f64.atan() - 0.785).abs() < 1e-3);
        assert!((1.5f64 * 1.5f64.atan() - 1.474).abs() < 1e-3);
    }

    #[test]
    fn params_examples() {
        let p = coder_params(0.1).unwrap();
        assert!((p.d_const - 0.01 * PI * PI / 4.0).abs() < 1e-15);
        assert!((p.d_const - 0.02467).abs() < 1e-5);
        assert_eq!(p.k_coeffs, 3);
        assert_eq!(coder_params(1.0 / 6.0 - 1e-9).unwrap().k_coeffs, 2);
        assert_eq!(coder_params(0.01).unwrap().k_coeffs, 21);
        for d in [0.15, 0.1, 0.03, 0.01, 0.002] {
            let p = coder_params(d).unwrap();
            assert_eq!(p.k_coeffs, (2.0 / (PI * PI * d)).ceil() as usize);
            assert!(p.step > 0.0);
            assert!(p.expected_distortion() <= d);
        }
        assert!(coder_params(0.0).is_err());
        assert!(coder_params(1.0 / 6.0).is_err());
    }

    #[test]
    fn encode_examples() {
        let p = coder_params(0.1).unwrap();
        let k = p.k_coeffs;
        let zero = dithered_encode(&KltCoefficients(vec![0.0; k]), &vec![0.0; k], &p).unwrap();
        assert!(zero.indices.iter().all(|&i| i == 0));
        let mut y = vec![0.0; k];
        y[0] = p.step;
        assert_eq!(dithered_encode(&KltCoefficients(y.clone()), &vec![0.0; k], &p).unwrap().indices[0], 1);
        y[0] = 0.6 * p.step;
        let mut u = vec![0.0; k];
        u[0] = -0.3;
        assert_eq!(dithered_encode(&KltCoefficients(y), &u, &p).unwrap().indices[0], 0);
        assert!(dithered_encode(&KltCoefficients(vec![0.0; k]), &vec![0.0; k + 1], &p).is_err());
        assert!(dithered_encode(&KltCoefficients(vec![0.0; k - 1]), &vec![0.0; k], &p).is_err());
        assert!(dithered_encode(&KltCoefficients(vec![0.0; k]), &vec![0.7; k], &p).is_err());
        assert_eq!(round_half_even(0.5), 0.0);
        assert_eq!(round_half_even(1.5), 2.0);
        assert_eq!(round_half_even(-2.5), -2.0);
    }

    #[test]
    fn decode_examples() {
        let p = coder_params(0.1).unwrap();
        let k = p.k_coeffs;
        let basis = KltBasis::new(64, 32).unwrap();
        let cw = DitheredCodeword {
            indices: vec![0; k],
            dither: vec![0.0; k],
        };
        assert!(dithered_decode(&cw, &p, &basis).unwrap().values().iter().all(|&v| v == 0.0));
        let mut cw = cw;
        cw.indices[0] = 2;
        let y = decoded_coefficients(&cw, &p);
        let lam = eigenvalue(1);
        assert!((y.0[0] - lam / (lam + p.step * p.step / 12.0) * 2.0 * p.step).abs() < 1e-15);
        assert!(y.0[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn arcsine_entropy_limits() {
        let closed = (PI * SQRT_2 / 2.0).log2();
        assert!((closed - 1.1515).abs() < 1e-4);
        // 30-digit reference values; the approach to the arcsine entropy is O(sqrt w)
        for (w, want) in [(1e-4, 1.158_777_621_694_827), (1e-3, 1.174_521_985_470_405), (1e-2, 1.224_302_568_663_822)] {
            let h = arcsine_uniform_entropy(w).unwrap();
            assert!((h - want).abs() < 1e-8 * want, "w {w}: {h}");
            assert!(((h - closed) / w.sqrt() - 0.73).abs() < 0.03);
        }
        let tiny = arcsine_uniform_entropy(1e-8).unwrap();
        assert!((tiny - closed).abs() < 1e-3, "{tiny} vs {closed}");
        let big = arcsine_uniform_entropy(1e3).unwrap();
        assert!((big - 1e3f64.log2()).abs() < 1e-2);
        for w in [1e-3, 0.3, 1.0, 2.0 * SQRT_2, 5.0, 40.0] {
            let full = arcsine_uniform_entropy(w).unwrap();
            let half = arcsine_uniform_entropy_half_line(w).unwrap();
            assert!((full - half).abs() < 1e-9, "w {w}: {full} vs {half}");
        }
        assert!(arcsine_uniform_entropy(0.0).is_err());
        assert!(arcsine_uniform_entropy(-1.0).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        for w in [0.01, 0.5, 3.0] {
            let q = integrate_breakpoints(|y| arcsine_uniform_density(y, w), &entropy_breakpoints(w), Tolerance::relative(1e-10));
            assert!((q.value - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn hbar_dominates_lce_and_summands_nonnegative() {
        for d in log_grid(2e-3, 0.16, 25) {
            let s = hbar_summands(d).unwrap();
            assert!(s.iter().all(|&x| x >= -1e-9));
            let h: f64 = s.iter().sum();
            assert!(h >= lce_entropy_distortion(d).unwrap());
        }
        assert!(hbar(0.0).is_err());
    }

    #[test]
    fn asymptotic_constant_positive() {
        assert!(hbar_asymptotic_constant() > 0.0);
    }

    #[test]
    fn dither_equivalence() {
        // (round(Y/step + U) - U) step behaves like Y + step U'
        let p = coder_params(0.05).unwrap();
        let draws = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (mut a, mut b) = ([Moments::default(); 2], [Moments::default(); 2]);
        let (mut cov_a, mut cov_b) = (Moments::default(), Moments::default());
        for _ in 0..draws {
            let u: f64 = rng.random();
            let y = crate::process::klt_coefficient_analytic(1, u).unwrap();
            let d: f64 = rng.random::<f64>() - 0.5;
            let e: f64 = rng.random::<f64>() - 0.5;
            let out_a = (round_half_even(y / p.step + d) - d) * p.step;
            let out_b = y + p.step * e;
            a[0].push(y);
            a[1].push(out_a);
            b[0].push(y);
            b[1].push(out_b);
            cov_a.push(y * out_a);
            cov_b.push(y * out_b);
        }
        let within = |x: &Moments, y: &Moments| (x.mean() - y.mean()).abs() <= 3.0 * (x.std_error().powi(2) + y.std_error().powi(2)).sqrt();
        assert!(within(&a[1], &b[1]));
        assert!(within(&cov_a, &cov_b));
        // variance of the output: compare second moments
        let mut sq_a = Moments::default();
        let mut sq_b = Moments::default();
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for _ in 0..draws {
            let u: f64 = rng.random();
            let y = crate::process::klt_coefficient_analytic(1, u).unwrap();
            let d: f64 = rng.random::<f64>() - 0.5;
            let e: f64 = rng.random::<f64>() - 0.5;
            sq_a.push(((round_half_even(y / p.step + d) - d) * p.step).powi(2));
            sq_b.push((y + p.step * e).powi(2));
        }
        assert!(within(&sq_a, &sq_b));
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let a = klt_monte_carlo(0.1, 20_000, 5, CoefficientSource::Grid { n: 256 }).unwrap();
        let b = klt_monte_carlo(0.1, 20_000, 5, CoefficientSource::Grid { n: 256 }).unwrap();
        assert_eq!(a.distortion, b.distortion);
        assert_eq!(a.conditional_entropy, b.conditional_entropy);
        assert!(a.distortion.mean() <= 0.1);
    }
}
