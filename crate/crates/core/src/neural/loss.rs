//! The relaxed Lagrangian `H~ + lambda D~` and its gradient.

use std::f64::consts::LN_2;

use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{domain, Error, Result};
use crate::transform::{FactorizedEntropyModel, ScaledOrthonormal, Transform, TransformCode};

/// Training inputs. Codes with a fixed basis work in the coefficient domain,
/// where `||x - Q c_hat||^2 = ||x||^2 - ||c||^2 + ||c - c_hat||^2`.
#[derive(Debug, Clone, Copy)]
pub enum BatchInput<'a> {
    Signals(&'a Array2<f64>),
    Coefficients {
        coefficients: &'a Array2<f64>,
        /// `||x||^2` per row.
        energy: &'a [f64],
        n: usize,
    },
}

impl BatchInput<'_> {
    fn rows(&self) -> usize {
        match self {
            BatchInput::Signals(x) => x.nrows(),
            BatchInput::Coefficients { coefficients, .. } => coefficients.nrows(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateTerms {
    pub loss: f64,
    /// Batch mean of `-sum_dims log2 p~`.
    pub rate_bits: f64,
    /// Batch mean grid MSE.
    pub distortion: f64,
    /// Relaxed latents that fell outside the model support.
    pub clamped: usize,
}

/// Flattened gradients in [`parameter_names`](super::parameter_names) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

/// How relaxed latents are formed from analysis outputs.
#[derive(Debug, Clone, Copy)]
pub enum Relaxation<'a> {
    /// `y + noise`, noise one row per sample.
    Noise(&'a Array2<f64>),
    /// Hard rounding with an identity backward pass.
    StraightThrough,
}

/// Rate of relaxed latents under the piecewise-linear interpolation of the
/// model masses; outside the support the density decays as `e^{-(|v| - B)}`.
/// Returns the batch-mean rate, `d rate / d v`, `d rate / d logits` and the
/// clamp count.
pub(crate) fn relaxed_rate(model: &FactorizedEntropyModel, v: &Array2<f64>) -> (f64, Array2<f64>, Array2<f64>, usize) {
    let p = model.pmf();
    let half = model.half_width();
    let b = half as f64;
    let rows = v.nrows() as f64;
    let mut d_v = Array2::zeros(v.raw_dim());
    let mut d_p = Array2::<f64>::zeros(p.raw_dim());
    let mut total = 0.0;
    let mut clamped = 0;
    for ((r, k), &val) in v.indexed_iter() {
        if val.abs() <= b {
            let pos = val + b;
            let j = (pos.floor() as usize).min(2 * half - 1);
            let f = pos - j as f64;
            let (p0, p1) = (p[[k, j]], p[[k, j + 1]]);
            let dens = (1.0 - f) * p0 + f * p1;
            total -= dens.log2();
            let g = -1.0 / (dens * LN_2 * rows);
            d_v[[r, k]] = g * (p1 - p0);
            d_p[[k, j]] += g * (1.0 - f);
            d_p[[k, j + 1]] += g * f;
        } else {
            clamped += 1;
            let col = if val > 0.0 { 2 * half } else { 0 };
            let excess = val.abs() - b;
            total += excess / LN_2 - p[[k, col]].log2();
            d_v[[r, k]] = val.signum() / (LN_2 * rows);
            d_p[[k, col]] -= 1.0 / (p[[k, col]] * LN_2 * rows);
        }
    }
    // softmax Jacobian, row by row
    let mut d_logits = d_p;
    for (mut g, pr) in d_logits.rows_mut().into_iter().zip(p.rows()) {
        let inner = g.dot(&pr);
        Zip::from(&mut g).and(&pr).for_each(|gi, &pi| *gi = pi * (*gi - inner));
    }
    (total / rows, d_v, d_logits, clamped)
}

pub(crate) fn relax(y: &Array2<f64>, relaxation: Relaxation<'_>) -> Result<Array2<f64>> {
    match relaxation {
        Relaxation::Noise(noise) => {
            if noise.shape() != y.shape() {
                return Err(Error::Dimension {
                    expected: y.len(),
                    actual: noise.len(),
                    context: "noise draws",
                });
            }
            Ok(y + noise)
        }
        Relaxation::StraightThrough => Ok(y.mapv(f64::round_ties_even)),
    }
}

pub fn surrogate_loss(code: &TransformCode, batch: BatchInput<'_>, lambda: f64, relaxation: Relaxation<'_>) -> Result<SurrogateTerms> {
    surrogate_loss_and_gradient(code, batch, lambda, relaxation).map(|(t, _)| t)
}

pub fn surrogate_loss_and_gradient(
    code: &TransformCode,
    batch: BatchInput<'_>,
    lambda: f64,
    relaxation: Relaxation<'_>,
) -> Result<(SurrogateTerms, Gradients)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return domain(format!("lambda must be finite and nonnegative, got {lambda}"));
    }
    if batch.rows() == 0 {
        return domain("empty batch");
    }
    if code.entropy.half_width() == 0 {
        return domain("entropy model support must have half-width >= 1");
    }
    match &code.transform {
        Transform::Fixed(f) => fixed_loss(f, &code.entropy, batch, lambda, relaxation),
        Transform::Mlp { analysis, synthesis } => {
            let BatchInput::Signals(x) = batch else {
                return domain("network codes need signal batches");
            };
            let rows = x.nrows() as f64;
            let n = x.ncols() as f64;
            let (y, a_tape) = analysis.forward_tape(x)?;
            let v = relax(&y, relaxation)?;
            let (rate, d_v_rate, d_logits, clamped) = relaxed_rate(&code.entropy, &v);
            let (x_hat, s_tape) = synthesis.forward_tape(&v)?;
            let err = &x_hat - x;
            let distortion = err.mapv(|e| e * e).sum() / (rows * n);
            let d_xhat = err * (2.0 * lambda / (rows * n));
            let mut s_grads = synthesis.zero_grads();
            let d_v = synthesis.backward(&s_tape, &d_xhat, &mut s_grads) + d_v_rate;
            let mut a_grads = analysis.zero_grads();
            analysis.backward(&a_tape, &d_v, &mut a_grads);
            let mut out = Vec::new();
            for g in a_grads.layers.into_iter().chain(s_grads.layers) {
                out.push(g.weight.into_raw_vec_and_offset().0);
                out.push(g.bias.to_vec());
            }
            out.push(d_logits.into_raw_vec_and_offset().0);
            let terms = SurrogateTerms {
                loss: rate + lambda * distortion,
                rate_bits: rate,
                distortion,
                clamped,
            };
            Ok((terms, Gradients(out)))
        }
    }
}

fn fixed_loss(
    f: &ScaledOrthonormal,
    model: &FactorizedEntropyModel,
    batch: BatchInput<'_>,
    lambda: f64,
    relaxation: Relaxation<'_>,
) -> Result<(SurrogateTerms, Gradients)> {
    let owned;
    let (c, energy, n): (&Array2<f64>, Vec<f64>, usize) = match batch {
        BatchInput::Signals(x) => {
            if x.ncols() != f.n() {
                return Err(Error::Dimension {
                    expected: f.n(),
                    actual: x.ncols(),
                    context: "analysis input",
                });
            }
            owned = f.coefficients(x);
            let energy = x.rows().into_iter().map(|r| r.dot(&r)).collect();
            (&owned, energy, f.n())
        }
        BatchInput::Coefficients { coefficients, energy, n } => (coefficients, energy.to_vec(), n),
    };
    if c.ncols() != f.dims() {
        return Err(Error::Dimension {
            expected: f.dims(),
            actual: c.ncols(),
            context: "coefficient batch",
        });
    }
    let rows = c.nrows() as f64;
    let y = c * &f.analysis_scale;
    let v = relax(&y, relaxation)?;
    let (rate, d_v_rate, d_logits, clamped) = relaxed_rate(model, &v);
    let c_hat = &v * &f.synthesis_scale;
    let diff = &c_hat - c;
    let residual: f64 = energy.iter().sum::<f64>() - c.mapv(|x| x * x).sum();
    let distortion = (residual + diff.mapv(|e| e * e).sum()) / (rows * n as f64);
    let d_chat = diff * (2.0 * lambda / (rows * n as f64));
    let d_synth: Array1<f64> = (&d_chat * &v).sum_axis(Axis(0));
    let d_v = &d_chat * &f.synthesis_scale + d_v_rate;
    let d_anal: Array1<f64> = (&d_v * c).sum_axis(Axis(0));
    let terms = SurrogateTerms {
        loss: rate + lambda * distortion,
        rate_bits: rate,
        distortion,
        clamped,
    };
    Ok((terms, Gradients(vec![d_anal.to_vec(), d_synth.to_vec(), d_logits.into_raw_vec_and_offset().0])))
}
