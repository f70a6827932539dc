use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::process::{grid_point, jump_index};
use crate::rng::{stream, Substream};
use crate::transform::{
    code_evaluate, evaluate_weighted, fixed_transform, FactorizedEntropyModel, FixedKind, ScaledOrthonormal, Transform,
    TransformCode,
};

use super::loss::{surrogate_loss_and_gradient, BatchInput, Relaxation, SurrogateTerms};
use super::mlp::MlpTransform;
use super::params::parameters_mut;
use super::sawbridge::sawbridge_loss_and_gradient;

/// Stream index for training draws; evaluation chunks count up from zero.
const TRAIN_STREAM: u64 = 1 << 40;
/// Stream index for the draws the final entropy model is fitted to.
const FIT_STREAM: u64 = TRAIN_STREAM + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodeFamily {
    Fixed(FixedKind),
    /// One affine layer on each side.
    ArbitraryLinear,
    /// Hidden-layer networks on both sides.
    NonlinearMlp,
    /// Affine analysis, hidden-layer synthesis.
    Hybrid,
}

impl CodeFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeFamily::Fixed(k) => k.as_str(),
            CodeFamily::ArbitraryLinear => "arbitrary-linear",
            CodeFamily::NonlinearMlp => "nonlinear-mlp",
            CodeFamily::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for CodeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arbitrary-linear" => Ok(CodeFamily::ArbitraryLinear),
            "nonlinear-mlp" => Ok(CodeFamily::NonlinearMlp),
            "hybrid" => Ok(CodeFamily::Hybrid),
            other => other
                .parse::<FixedKind>()
                .map(CodeFamily::Fixed)
                .map_err(|_| Error::Config(format!("unknown code family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub family: CodeFamily,
    pub lambda: f64,
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    /// Fraction of `steps` after which the rate is multiplied by `lr_decay_factor`.
    pub lr_decay_at: f64,
    pub lr_decay_factor: f64,
    pub seed: u64,
    pub latent_dims: usize,
    pub noise_proxy: bool,
    pub slope: f64,
    pub n: usize,
    pub half_width: usize,
    pub hidden_units: usize,
    /// Initial quantizer step for fixed bases, in units of the continuous
    /// coefficient `<x, phi>`.
    pub init_step: f64,
    /// Refit the entropy model to the hard-quantized latents after training.
    pub refit_entropy_model: bool,
    /// Multiplier on the initial weights of the last analysis layer.
    pub init_latent_gain: f64,
    /// Learning-rate multiplier for the entropy-model logits.
    pub entropy_lr_scale: f64,
    /// Slope (nats per bin) of the initial triangular logit profile.
    pub init_logit_slope: f64,
    pub eval_every: usize,
    pub eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            family: CodeFamily::NonlinearMlp,
            lambda: 32.0,
            steps: 200_000,
            batch: 256,
            learning_rate: 1e-3,
            lr_decay_at: 0.8,
            lr_decay_factor: 0.1,
            seed: 0,
            latent_dims: 16,
            noise_proxy: true,
            slope: 0.01,
            n: 1024,
            half_width: FactorizedEntropyModel::DEFAULT_HALF_WIDTH,
            hidden_units: 100,
            init_step: 0.1,
            refit_entropy_model: true,
            init_latent_gain: 1.0,
            entropy_lr_scale: 1.0,
            init_logit_slope: 0.5,
            eval_every: 1000,
            eval_samples: 1 << 14,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive and finite");
        }
        if self.steps == 0 || self.batch == 0 {
            return bad("steps and batch must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(0.0..=1.0).contains(&self.lr_decay_at) || !(self.lr_decay_factor > 0.0) {
            return bad("invalid learning-rate schedule");
        }
        if self.latent_dims == 0 || self.latent_dims > self.n {
            return bad("latent_dims must lie in 1..=n");
        }
        if self.half_width == 0 || self.hidden_units == 0 || self.eval_every == 0 || self.eval_samples == 0 {
            return bad("half_width, hidden_units, eval_every and eval_samples must be positive");
        }
        if !(self.init_step > 0.0) || !(self.entropy_lr_scale > 0.0) || !(self.init_logit_slope >= 0.0) {
            return bad("init_step and entropy_lr_scale must be positive, init_logit_slope nonnegative");
        }
        if !self.slope.is_finite() || !(self.init_latent_gain > 0.0 && self.init_latent_gain.is_finite()) {
            return bad("slope and init_latent_gain must be finite, init_latent_gain positive");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if (step as f64) >= self.lr_decay_at * self.steps as f64 {
            self.learning_rate * self.lr_decay_factor
        } else {
            self.learning_rate
        }
    }

    /// `key = value` lines; `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "family" => self.family = value.parse()?,
            "lambda" => self.lambda = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "lr_decay_at" => self.lr_decay_at = num(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "latent_dims" => self.latent_dims = num(key, value)?,
            "noise_proxy" => self.noise_proxy = num(key, value)?,
            "slope" => self.slope = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "half_width" => self.half_width = num(key, value)?,
            "hidden_units" => self.hidden_units = num(key, value)?,
            "init_step" => self.init_step = num(key, value)?,
            "refit_entropy_model" => self.refit_entropy_model = num(key, value)?,
            "init_latent_gain" => self.init_latent_gain = num(key, value)?,
            "entropy_lr_scale" => self.entropy_lr_scale = num(key, value)?,
            "init_logit_slope" => self.init_logit_slope = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "eval_samples" => self.eval_samples = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "family = {}", self.family);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "lr_decay_at = {}", self.lr_decay_at);
        let _ = writeln!(s, "lr_decay_factor = {}", self.lr_decay_factor);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "latent_dims = {}", self.latent_dims);
        let _ = writeln!(s, "noise_proxy = {}", self.noise_proxy);
        let _ = writeln!(s, "slope = {}", self.slope);
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "half_width = {}", self.half_width);
        let _ = writeln!(s, "hidden_units = {}", self.hidden_units);
        let _ = writeln!(s, "init_step = {}", self.init_step);
        let _ = writeln!(s, "refit_entropy_model = {}", self.refit_entropy_model);
        let _ = writeln!(s, "init_latent_gain = {}", self.init_latent_gain);
        let _ = writeln!(s, "entropy_lr_scale = {}", self.entropy_lr_scale);
        let _ = writeln!(s, "init_logit_slope = {}", self.init_logit_slope);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "eval_samples = {}", self.eval_samples);
        s
    }
}

/// Freshly initialized code for `config`, drawing weights from the init stream.
pub fn init_code(config: &TrainConfig) -> Result<TransformCode> {
    config.validate()?;
    let (n, d, h) = (config.n, config.latent_dims, config.hidden_units);
    let mut rng = stream(config.seed, Substream::Init, 0);
    let transform = match config.family {
        CodeFamily::Fixed(kind) => {
            let basis = fixed_transform(kind, n, d)?;
            // grid coefficients are sqrt(n) times the continuous ones
            let a = 1.0 / (config.init_step * (n as f64).sqrt());
            Transform::Fixed(ScaledOrthonormal {
                kind,
                basis,
                analysis_scale: Array1::from_elem(d, a),
                synthesis_scale: Array1::from_elem(d, 1.0 / a),
            })
        }
        CodeFamily::ArbitraryLinear => Transform::Mlp {
            analysis: MlpTransform::init(&[n, d], 1.0, &mut rng)?,
            synthesis: MlpTransform::init(&[d, n], 1.0, &mut rng)?,
        },
        CodeFamily::NonlinearMlp => Transform::Mlp {
            analysis: MlpTransform::init(&[n, h, h, d], config.slope, &mut rng)?,
            synthesis: MlpTransform::init(&[d, h, h, n], config.slope, &mut rng)?,
        },
        CodeFamily::Hybrid => Transform::Mlp {
            analysis: MlpTransform::init(&[n, d], 1.0, &mut rng)?,
            synthesis: MlpTransform::init(&[d, h, h, n], config.slope, &mut rng)?,
        },
    };
    let mut transform = transform;
    if let Transform::Mlp { analysis, .. } = &mut transform {
        let last = analysis.layers.len() - 1;
        analysis.layers[last].weight *= config.init_latent_gain;
    }
    TransformCode::new(transform, FactorizedEntropyModel::triangular(d, config.half_width, config.init_logit_slope))
}

/// First/second-moment adaptive steps, one state slot per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: shapes.iter().map(|&l| vec![0.0; l]).collect(),
            v: shapes.iter().map(|&l| vec![0.0; l]).collect(),
            t: 0,
        }
    }

    /// One update; `lr[i]` is the step size for tensor `i`.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>], lr: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((((p, g), m), v), &lr) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v).zip(lr) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub step: usize,
    /// Mean surrogate loss over the steps since the previous checkpoint.
    pub surrogate_loss: f64,
    pub entropy_bits: f64,
    pub distortion: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub points: Vec<TracePoint>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,surrogate_loss,entropy_bits,distortion\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{}", p.step, p.surrogate_loss, p.entropy_bits, p.distortion);
        }
        s
    }

    /// Whether the final surrogate loss is within 5% of the best checkpoint.
    pub fn converged(&self) -> bool {
        let best = self.points.iter().map(|p| p.surrogate_loss).fold(f64::INFINITY, f64::min);
        self.points.last().is_some_and(|last| last.surrogate_loss <= best + 0.05 * best.abs())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub code: TransformCode,
    pub trace: TrainTrace,
    pub converged: bool,
    /// Relaxed latents that left the model support, summed over training.
    pub clamped: u64,
}

/// Grid coefficients `Q^T x_j` and energies `||x_j||^2` for all `n + 1`
/// realizations, by suffix sums over the rows of `Q`.
struct CoefficientTable {
    coefficients: Array2<f64>,
    energy: Vec<f64>,
}

impl CoefficientTable {
    fn new(basis: &Array2<f64>) -> Self {
        let (n, d) = basis.dim();
        let t: Array1<f64> = (0..n).map(|i| grid_point(i, n)).collect();
        let base = basis.t().dot(&t);
        let mut coefficients = Array2::zeros((n + 1, d));
        let mut suffix = Array1::<f64>::zeros(d);
        coefficients.row_mut(n).assign(&base);
        for j in (0..n).rev() {
            suffix += &basis.row(j);
            coefficients.row_mut(j).assign(&(&base - &suffix));
        }
        let energy = (0..=n)
            .map(|j| (0..n).map(|i| (t[i] - if i >= j { 1.0 } else { 0.0 }).powi(2)).sum())
            .collect();
        Self { coefficients, energy }
    }

    fn gather(&self, indices: &[usize]) -> (Array2<f64>, Vec<f64>) {
        let c = self.coefficients.select(ndarray::Axis(0), indices);
        (c, indices.iter().map(|&j| self.energy[j]).collect())
    }
}

fn draw_indices(rng: &mut ChaCha8Rng, count: usize, n: usize) -> Vec<usize> {
    (0..count).map(|_| jump_index(rng.random::<f64>(), n)).collect()
}

fn state_dump(code: &TransformCode, terms: &SurrogateTerms) -> String {
    let mut code = code.clone();
    let largest = parameters_mut(&mut code)
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
    format!(
        "rate {} bits, distortion {}, clamped {}, max |param| {}",
        terms.rate_bits, terms.distortion, terms.clamped, largest
    )
}

/// Stochastic optimization of the relaxed Lagrangian for `config.steps` steps.
pub fn train(config: &TrainConfig, mut code: TransformCode) -> Result<TrainOutcome> {
    config.validate()?;
    if code.n() != config.n || code.latent_dims() != config.latent_dims {
        return Err(Error::Config("code shape does not match the config".into()));
    }
    let n = config.n;
    let mut source = stream(config.seed, Substream::SourceU, TRAIN_STREAM);
    let mut noise_rng = stream(config.seed, Substream::Noise, TRAIN_STREAM);
    let table = match &code.transform {
        Transform::Fixed(f) => Some(CoefficientTable::new(&f.basis)),
        Transform::Mlp { .. } => None,
    };
    let shapes: Vec<usize> = parameters_mut(&mut code).iter().map(|p| p.len()).collect();
    let mut adam = Adam::new(&shapes);
    let mut trace = TrainTrace::default();
    let mut window = (0.0, 0usize);
    let mut clamped = 0u64;
    let d = config.latent_dims;

    for step in 1..=config.steps {
        let indices = draw_indices(&mut source, config.batch, n);
        let noise = config
            .noise_proxy
            .then(|| Array2::from_shape_simple_fn((config.batch, d), || noise_rng.random::<f64>() - 0.5));
        let relaxation = match &noise {
            Some(z) => Relaxation::Noise(z),
            None => Relaxation::StraightThrough,
        };
        let (terms, grads) = match &table {
            Some(table) => {
                let (c, energy) = table.gather(&indices);
                let batch = BatchInput::Coefficients {
                    coefficients: &c,
                    energy: &energy,
                    n,
                };
                surrogate_loss_and_gradient(&code, batch, config.lambda, relaxation)?
            }
            None => sawbridge_loss_and_gradient(&code, &indices, config.lambda, relaxation)?,
        };
        if !terms.loss.is_finite() || grads.0.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step,
                detail: state_dump(&code, &terms),
            });
        }
        clamped += terms.clamped as u64;
        window = (window.0 + terms.loss, window.1 + 1);
        let base = config.learning_rate_at(step - 1);
        let mut rates = vec![base; shapes.len()];
        rates[shapes.len() - 1] = base * config.entropy_lr_scale;
        adam.step(parameters_mut(&mut code), &grads.0, &rates);

        if step % config.eval_every == 0 || step == config.steps {
            let eval = code_evaluate(&code, config.eval_samples, config.seed)?;
            let entropy_bits = if config.refit_entropy_model {
                eval.per_dimension_entropy_bits.iter().sum()
            } else {
                eval.entropy_bits
            };
            trace.points.push(TracePoint {
                step,
                surrogate_loss: window.0 / window.1 as f64,
                entropy_bits,
                distortion: eval.distortion,
            });
            window = (0.0, 0);
        }
    }
    if config.refit_entropy_model {
        refit_entropy_model(&mut code, config.seed, config.eval_samples)?;
    }
    let converged = trace.converged();
    Ok(TrainOutcome {
        code,
        trace,
        converged,
        clamped,
    })
}

/// Maximum-likelihood entropy model for the hard-quantized latents of
/// `samples` draws from the fitting stream of `seed`.
pub fn refit_entropy_model(code: &mut TransformCode, seed: u64, samples: usize) -> Result<()> {
    let n = code.n();
    let mut rng = stream(seed, Substream::SourceU, FIT_STREAM);
    let mut counts = vec![0u64; n + 1];
    for j in draw_indices(&mut rng, samples, n) {
        counts[j] += 1;
    }
    let eval = evaluate_weighted(code, &counts)?;
    code.entropy = FactorizedEntropyModel::fit_histograms(code.entropy.half_width(), &eval.histograms)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionUsage {
    pub dim: usize,
    pub entropy_bits: f64,
    pub active: bool,
}

/// Empirical entropy of each quantized latent over `samples` fresh draws.
pub fn latent_dimension_usage(code: &TransformCode, samples: usize, seed: u64) -> Result<Vec<DimensionUsage>> {
    let eval = code_evaluate(code, samples, seed)?;
    Ok(eval
        .per_dimension_entropy_bits
        .iter()
        .enumerate()
        .map(|(dim, &h)| DimensionUsage {
            dim,
            entropy_bits: h,
            active: h > crate::transform::ACTIVE_ENTROPY_BITS,
        })
        .collect())
}
