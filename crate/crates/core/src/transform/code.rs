use ndarray::{s, Array1, Array2, Axis};

use crate::error::{domain, Error, Result};
use crate::montecarlo::{histogram_entropy_bits, jump_times, Moments};
use crate::neural::MlpTransform;
use crate::process::{grid_point, jump_index};

use super::entropy_model::{quantize, FactorizedEntropyModel};
use super::fixed::{fixed_transform, FixedKind};

/// Quantized-latent entropy above which a dimension counts as used.
pub const ACTIVE_ENTROPY_BITS: f64 = 0.01;

/// Rows pushed through the transforms at once during evaluation.
const EVAL_BLOCK: usize = 256;

/// A fixed orthonormal basis `Q` (`n x d`) between two trainable diagonals:
/// latents `y = diag(a) Q^T x`, reconstruction `x_hat = Q diag(s) y_hat`.
/// The tied configuration has `s = 1/a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledOrthonormal {
    pub kind: FixedKind,
    pub basis: Array2<f64>,
    pub analysis_scale: Array1<f64>,
    pub synthesis_scale: Array1<f64>,
}

impl ScaledOrthonormal {
    /// Tied scaling with per-dimension analysis gains `scale`.
    pub fn tied(kind: FixedKind, n: usize, scale: Array1<f64>) -> Result<Self> {
        if scale.iter().any(|&a| !a.is_finite() || a == 0.0) {
            return domain("diagonal scale entries must be finite and nonzero");
        }
        let basis = fixed_transform(kind, n, scale.len())?;
        let synthesis_scale = scale.mapv(|a| 1.0 / a);
        Ok(Self {
            kind,
            basis,
            analysis_scale: scale,
            synthesis_scale,
        })
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dims(&self) -> usize {
        self.basis.ncols()
    }

    /// `Q^T x` for each row of `x`.
    pub fn coefficients(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.basis)
    }

    pub fn reconstruct(&self, coefficients: &Array2<f64>) -> Array2<f64> {
        coefficients.dot(&self.basis.t())
    }
}

/// Dense view of a linear code: `y = A x + a0`, `x_hat = S y_hat + s0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTransformPair {
    /// `d x n`.
    pub analysis: Array2<f64>,
    pub analysis_bias: Array1<f64>,
    /// `n x d`.
    pub synthesis: Array2<f64>,
    pub synthesis_bias: Array1<f64>,
    pub kind: LinearKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearKind {
    ArbitraryLinear,
    FixedOrthonormal(FixedKind),
}

impl LinearTransformPair {
    /// `synthesis(analysis(x))` with quantization bypassed.
    pub fn round_trip(&self, x: &[f64]) -> Vec<f64> {
        let x = Array1::from(x.to_vec());
        let y = self.analysis.dot(&x) + &self.analysis_bias;
        (self.synthesis.dot(&y) + &self.synthesis_bias).to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Fixed(ScaledOrthonormal),
    /// One-layer networks on both sides give the arbitrary linear code.
    Mlp {
        analysis: MlpTransform,
        synthesis: MlpTransform,
    },
}

impl Transform {
    pub fn n(&self) -> usize {
        match self {
            Transform::Fixed(f) => f.n(),
            Transform::Mlp { analysis, .. } => analysis.input_dim(),
        }
    }

    pub fn latent_dims(&self) -> usize {
        match self {
            Transform::Fixed(f) => f.dims(),
            Transform::Mlp { analysis, .. } => analysis.output_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Transform::Fixed(f) => {
                let d = f.dims();
                if f.analysis_scale.len() != d || f.synthesis_scale.len() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        actual: f.analysis_scale.len().min(f.synthesis_scale.len()),
                        context: "diagonal scale length",
                    });
                }
                if d > f.n() {
                    return domain("latent dims exceed grid size");
                }
                Ok(())
            }
            Transform::Mlp { analysis, synthesis } => {
                analysis.validate()?;
                synthesis.validate()?;
                if synthesis.input_dim() != analysis.output_dim() {
                    return Err(Error::Dimension {
                        expected: analysis.output_dim(),
                        actual: synthesis.input_dim(),
                        context: "synthesis input",
                    });
                }
                if synthesis.output_dim() != analysis.input_dim() {
                    return Err(Error::Dimension {
                        expected: analysis.input_dim(),
                        actual: synthesis.output_dim(),
                        context: "synthesis output",
                    });
                }
                Ok(())
            }
        }
    }

    pub fn analyze_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        match self {
            Transform::Fixed(f) => {
                if x.ncols() != f.n() {
                    return Err(Error::Dimension {
                        expected: f.n(),
                        actual: x.ncols(),
                        context: "analysis input",
                    });
                }
                Ok(f.coefficients(x) * &f.analysis_scale)
            }
            Transform::Mlp { analysis, .. } => analysis.forward_batch(x),
        }
    }

    pub fn synthesize_batch(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
        match self {
            Transform::Fixed(f) => {
                if y.ncols() != f.dims() {
                    return Err(Error::Dimension {
                        expected: f.dims(),
                        actual: y.ncols(),
                        context: "synthesis input",
                    });
                }
                Ok(f.reconstruct(&(y * &f.synthesis_scale)))
            }
            Transform::Mlp { synthesis, .. } => synthesis.forward_batch(y),
        }
    }

    /// Dense matrices for linear codes; `None` for networks with hidden layers.
    pub fn linear_pair(&self) -> Option<LinearTransformPair> {
        match self {
            Transform::Fixed(f) => {
                let analysis = (&f.basis * &f.analysis_scale).reversed_axes();
                let synthesis = &f.basis * &f.synthesis_scale;
                Some(LinearTransformPair {
                    analysis,
                    analysis_bias: Array1::zeros(f.dims()),
                    synthesis,
                    synthesis_bias: Array1::zeros(f.n()),
                    kind: LinearKind::FixedOrthonormal(f.kind),
                })
            }
            Transform::Mlp { analysis, synthesis } if analysis.layers.len() == 1 && synthesis.layers.len() == 1 => {
                Some(LinearTransformPair {
                    analysis: analysis.layers[0].weight.clone(),
                    analysis_bias: analysis.layers[0].bias.clone(),
                    synthesis: synthesis.layers[0].weight.clone(),
                    synthesis_bias: synthesis.layers[0].bias.clone(),
                    kind: LinearKind::ArbitraryLinear,
                })
            }
            Transform::Mlp { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformCode {
    pub transform: Transform,
    pub entropy: FactorizedEntropyModel,
}

impl TransformCode {
    pub fn new(transform: Transform, entropy: FactorizedEntropyModel) -> Result<Self> {
        transform.validate()?;
        if entropy.dims() != transform.latent_dims() {
            return Err(Error::Dimension {
                expected: transform.latent_dims(),
                actual: entropy.dims(),
                context: "entropy model dimensions",
            });
        }
        Ok(Self { transform, entropy })
    }

    pub fn n(&self) -> usize {
        self.transform.n()
    }

    pub fn latent_dims(&self) -> usize {
        self.transform.latent_dims()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeEvaluation {
    /// Mean of `-sum_dims log2 p(q)` over samples.
    pub entropy_bits: f64,
    /// Mean grid MSE.
    pub distortion: f64,
    pub n_samples: usize,
    pub entropy_std_error: f64,
    pub distortion_std_error: f64,
    /// Latent values clamped into the model support.
    pub clamped: u64,
    /// Plug-in entropy of each dimension's quantized values.
    pub per_dimension_entropy_bits: Vec<f64>,
    /// Sample counts per (dimension, bin).
    pub histograms: Array2<f64>,
}

impl CodeEvaluation {
    pub fn active_dimensions(&self) -> usize {
        self.per_dimension_entropy_bits.iter().filter(|&&h| h > ACTIVE_ENTROPY_BITS).count()
    }
}

/// Sawbridge realizations on `n` points for the given jump indices, one per row.
pub fn realization_rows(indices: &[usize], n: usize) -> Array2<f64> {
    Array2::from_shape_fn((indices.len(), n), |(r, i)| {
        grid_point(i, n) - if i >= indices[r] { 1.0 } else { 0.0 }
    })
}

/// Number of source draws landing on each of the `n + 1` distinct realizations.
pub fn jump_index_counts(seed: u64, samples: usize, n: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n + 1];
    for u in jump_times(seed, samples) {
        counts[jump_index(u, n)] += 1;
    }
    counts
}

/// Empirical rate and distortion of `code` on `samples` source draws.
///
/// Only `n + 1` distinct grid realizations exist, so each is coded once and
/// weighted by how often it was drawn.
pub fn code_evaluate(code: &TransformCode, samples: usize, seed: u64) -> Result<CodeEvaluation> {
    if samples == 0 {
        return domain("evaluation needs at least one sample");
    }
    let n = code.n();
    let counts = jump_index_counts(seed, samples, n);
    evaluate_weighted(code, &counts)
}

/// Evaluation against explicit realization weights (`weights[j]` for jump index `j`).
pub fn evaluate_weighted(code: &TransformCode, weights: &[u64]) -> Result<CodeEvaluation> {
    let n = code.n();
    if weights.len() != n + 1 {
        return Err(Error::Dimension {
            expected: n + 1,
            actual: weights.len(),
            context: "realization weights",
        });
    }
    let d = code.latent_dims();
    let b = code.entropy.half_width();
    let log2p = code.entropy.log2_pmf();
    let mut hist = Array2::<f64>::zeros((d, code.entropy.bins()));
    let mut rate = Moments::default();
    let mut dist = Moments::default();
    let mut clamped = 0u64;

    let used: Vec<usize> = (0..=n).filter(|&j| weights[j] > 0).collect();
    for block in used.chunks(EVAL_BLOCK) {
        let x = realization_rows(block, n);
        let y = code.transform.analyze_batch(&x)?;
        let mut y_hat = Array2::<f64>::zeros(y.raw_dim());
        let mut rates = vec![0.0; block.len()];
        for (r, row) in y.axis_iter(Axis(0)).enumerate() {
            let w = weights[block[r]];
            let latents = row.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| row.to_vec());
            if latents.iter().any(|v| !v.is_finite()) {
                return domain("analysis produced a non-finite latent");
            }
            let (q, c) = quantize(&latents, b);
            clamped += c as u64 * w;
            for (k, &qk) in q.iter().enumerate() {
                let col = code.entropy.column(qk);
                rates[r] -= log2p[[k, col]];
                hist[[k, col]] += w as f64;
                y_hat[[r, k]] = qk as f64;
            }
        }
        let x_hat = code.transform.synthesize_batch(&y_hat)?;
        for r in 0..block.len() {
            let w = weights[block[r]] as f64;
            let err = (&x.slice(s![r, ..]) - &x_hat.slice(s![r, ..])).mapv(|e| e * e).sum() / n as f64;
            rate.push_weighted(rates[r], w);
            dist.push_weighted(err, w);
        }
    }
    let per_dimension_entropy_bits = hist.rows().into_iter().map(|row| histogram_entropy_bits(row.iter().copied())).collect();
    Ok(CodeEvaluation {
        entropy_bits: rate.mean(),
        distortion: dist.mean(),
        n_samples: rate.count as usize,
        entropy_std_error: rate.std_error(),
        distortion_std_error: dist.std_error(),
        clamped,
        per_dimension_entropy_bits,
        histograms: hist,
    })
}

/// Replaces the entropy model with the maximum-likelihood fit to the
/// quantized latents of `samples` fresh draws.
pub fn fit_entropy_model(code: &mut TransformCode, samples: usize, seed: u64) -> Result<()> {
    let eval = code_evaluate(code, samples, seed)?;
    code.entropy = FactorizedEntropyModel::fit_histograms(code.entropy.half_width(), &eval.histograms)?;
    Ok(())
}
