use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, io_err, Error, Result};
use crate::klt_coder::{hbar, klt_monte_carlo, CoefficientSource};
use crate::neural::{init_code, train, CodeFamily, TrainConfig};
use crate::optimal::{entropy_distortion, lce_entropy_distortion, EntropyDistortionPoint, Provenance, SOURCE_VARIANCE};
use crate::transform::{code_evaluate, FixedKind};

use super::csv::Table;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    OptimalAnalytic,
    Lce,
    KltBound,
    KltDitheredEmpirical,
    Dct2,
    Daub4,
    KltSampled,
    ArbitraryLinear,
    NonlinearMlp,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::OptimalAnalytic,
        Family::Lce,
        Family::KltBound,
        Family::KltDitheredEmpirical,
        Family::Dct2,
        Family::Daub4,
        Family::KltSampled,
        Family::ArbitraryLinear,
        Family::NonlinearMlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::OptimalAnalytic => "optimal-analytic",
            Family::Lce => "lce",
            Family::KltBound => "klt-bound",
            Family::KltDitheredEmpirical => "klt-dithered-empirical",
            Family::Dct2 => "dct2",
            Family::Daub4 => "daub4",
            Family::KltSampled => "klt-sampled",
            Family::ArbitraryLinear => "arbitrary-linear",
            Family::NonlinearMlp => "nonlinear-mlp",
        }
    }

    /// Which grid this family sweeps over.
    pub fn grid_kind(self) -> GridKind {
        match self.code_family() {
            Some(_) => GridKind::Lambda,
            None => GridKind::Delta,
        }
    }

    /// The trainable code family, if any.
    pub fn code_family(self) -> Option<CodeFamily> {
        match self {
            Family::Dct2 => Some(CodeFamily::Fixed(FixedKind::Dct2)),
            Family::Daub4 => Some(CodeFamily::Fixed(FixedKind::Daub4)),
            Family::KltSampled => Some(CodeFamily::Fixed(FixedKind::KltSampled)),
            Family::ArbitraryLinear => Some(CodeFamily::ArbitraryLinear),
            Family::NonlinearMlp => Some(CodeFamily::NonlinearMlp),
            _ => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Lambda,
    Delta,
}

impl GridKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GridKind::Lambda => "lambda",
            GridKind::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub family: Family,
    /// Delta values for analytic and dithered families, lambda values for trainable ones.
    pub grid: Vec<f64>,
    /// Evaluation or Monte Carlo draws per point.
    pub samples: usize,
    pub seed: u64,
    pub n: usize,
    /// CSV destination; metadata goes to `<out>.meta.json`. `None` skips writing.
    pub out: Option<PathBuf>,
    /// Base training settings for trainable families; `family`, `lambda`,
    /// `seed` and `n` are overridden per point.
    pub train: TrainConfig,
}

impl SweepSpec {
    pub fn new(family: Family, grid: Vec<f64>) -> Self {
        Self {
            family,
            grid,
            samples: 1_000_000,
            seed: 0,
            n: 1024,
            out: None,
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return domain(format!("{} grid is empty", self.family.grid_kind().as_str()));
        }
        if self.grid.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return domain("grid values must be positive and finite");
        }
        if self.samples == 0 || self.n == 0 {
            return domain("samples and n must be at least 1");
        }
        Ok(())
    }

    /// Training config for grid value `lambda` of a trainable family.
    pub fn point_config(&self, lambda: f64) -> Option<TrainConfig> {
        let family = self.family.code_family()?;
        let mut cfg = self.train.clone();
        cfg.family = family;
        cfg.lambda = lambda;
        cfg.seed = self.seed;
        cfg.n = self.n;
        if let CodeFamily::Fixed(_) = family {
            cfg.latent_dims = self.n;
        }
        Some(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointMeta {
    pub parameter: f64,
    pub parameter_kind: GridKind,
    pub seed: u64,
    pub samples: usize,
    pub active_dimensions: Option<usize>,
    pub clamped: u64,
    pub converged: bool,
    pub entropy_std_error: Option<f64>,
    pub distortion_std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub family: Family,
    pub points: Vec<EntropyDistortionPoint>,
    pub meta: Vec<PointMeta>,
    pub tool_version: &'static str,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut table = Table::new([
            "family",
            "parameter_kind",
            "parameter",
            "entropy_bits",
            "distortion",
            "provenance",
            "seed",
            "samples",
            "active_dims",
            "clamped",
            "converged",
        ]);
        for (p, m) in self.points.iter().zip(&self.meta) {
            table.row([
                self.family.to_string(),
                m.parameter_kind.as_str().to_string(),
                m.parameter.to_string(),
                p.entropy_bits.to_string(),
                p.distortion.to_string(),
                p.provenance.as_str().to_string(),
                m.seed.to_string(),
                m.samples.to_string(),
                m.active_dimensions.map(|a| a.to_string()).unwrap_or_default(),
                m.clamped.to_string(),
                m.converged.to_string(),
            ]);
        }
        table.finish()
    }
}

fn analytic_meta(spec: &SweepSpec, delta: f64) -> PointMeta {
    PointMeta {
        parameter: delta,
        parameter_kind: GridKind::Delta,
        seed: spec.seed,
        samples: 0,
        active_dimensions: None,
        clamped: 0,
        converged: true,
        entropy_std_error: None,
        distortion_std_error: None,
    }
}

fn sweep_point(spec: &SweepSpec, g: f64) -> Result<(EntropyDistortionPoint, PointMeta)> {
    let point = |h: f64, d: f64, provenance| EntropyDistortionPoint {
        entropy_bits: h,
        distortion: d,
        provenance,
    };
    match spec.family {
        Family::OptimalAnalytic => Ok((point(entropy_distortion(g)?, g, Provenance::Analytic), analytic_meta(spec, g))),
        Family::Lce => Ok((point(lce_entropy_distortion(g)?, g, Provenance::Lce), analytic_meta(spec, g))),
        Family::KltBound => Ok((point(hbar(g)?, g, Provenance::Bound), analytic_meta(spec, g))),
        Family::KltDitheredEmpirical => {
            let mc = klt_monte_carlo(g, spec.samples, spec.seed, CoefficientSource::Grid { n: spec.n })?;
            let meta = PointMeta {
                samples: spec.samples,
                distortion_std_error: Some(mc.distortion.std_error()),
                ..analytic_meta(spec, g)
            };
            Ok((point(mc.entropy_bits(), mc.distortion.mean(), Provenance::Empirical), meta))
        }
        _ => {
            let cfg = spec.point_config(g).expect("trainable family");
            let outcome = train(&cfg, init_code(&cfg)?)?;
            let eval = code_evaluate(&outcome.code, spec.samples, spec.seed.wrapping_add(1))?;
            let meta = PointMeta {
                parameter: g,
                parameter_kind: GridKind::Lambda,
                seed: spec.seed,
                samples: spec.samples,
                active_dimensions: Some(eval.active_dimensions()),
                clamped: eval.clamped,
                converged: outcome.converged,
                entropy_std_error: Some(eval.entropy_std_error),
                distortion_std_error: Some(eval.distortion_std_error),
            };
            Ok((point(eval.entropy_bits, eval.distortion, Provenance::Empirical), meta))
        }
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    tool_version: &'static str,
    family: Family,
    grid_kind: GridKind,
    grid: &'a [f64],
    samples: usize,
    seed: u64,
    n: usize,
    source_variance: f64,
    training: Option<String>,
    points: &'a [PointMeta],
    created_unix_seconds: u64,
}

/// Evaluates every grid point (in parallel) and writes the CSV and its
/// metadata sidecar when `spec.out` is set.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let rows: Vec<(EntropyDistortionPoint, PointMeta)> =
        spec.grid.par_iter().map(|&g| sweep_point(spec, g)).collect::<Result<_>>()?;
    if let Some((p, m)) = rows.iter().find(|(p, _)| !p.entropy_bits.is_finite() || !p.distortion.is_finite()) {
        return domain(format!("non-finite result at {} = {}: {:?}", m.parameter_kind.as_str(), m.parameter, p));
    }
    let (points, meta): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let result = SweepResult {
        family: spec.family,
        points,
        meta,
        tool_version: TOOL_VERSION,
    };
    if let Some(out) = &spec.out {
        fs::write(out, result.to_csv()).map_err(io_err(out))?;
        let sidecar = Sidecar {
            tool_version: TOOL_VERSION,
            family: spec.family,
            grid_kind: spec.family.grid_kind(),
            grid: &spec.grid,
            samples: spec.samples,
            seed: spec.seed,
            n: spec.n,
            source_variance: SOURCE_VARIANCE,
            training: spec.family.code_family().map(|_| spec.point_config(spec.grid[0]).expect("trainable").to_kv_string()),
            points: &result.meta,
            created_unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        let path = meta_path(out);
        fs::write(&path, serde_json::to_string_pretty(&sidecar)?).map_err(io_err(&path))?;
    }
    Ok(result)
}

pub(crate) fn meta_path(out: &std::path::Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}
