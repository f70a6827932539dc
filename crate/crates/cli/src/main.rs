use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sawbridge_core::harness::{
    compare_curves, emit_realizations, run_sweep, trace_csv_path, usage_csv, Family, GridKind, SweepSpec,
};
use sawbridge_core::neural::{init_code, latent_dimension_usage, train, CodeFamily, TrainConfig};
use sawbridge_core::optimal::{log_grid, SOURCE_VARIANCE};
use sawbridge_core::transform::{code_evaluate, load_checkpoint, save_checkpoint};

const WORKERS_ENV: &str = "SAWBRIDGE_WORKERS";

#[derive(Parser)]
#[command(name = "sawbridge", version, about = "Entropy-distortion experiments for the sawbridge process")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Grid points per realization.
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Training {
    /// Training config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the number of optimization steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Override the latent dimension budget.
    #[arg(long)]
    latent_dims: Option<usize>,
}

impl Training {
    fn load(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                TrainConfig::from_kv_str(&text)?
            }
            None => TrainConfig::default(),
        };
        if let Some(steps) = self.steps {
            cfg.steps = steps;
        }
        if let Some(d) = self.latent_dims {
            cfg.latent_dims = d;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write sampled realizations as CSV (`u` then the grid values).
    Sample {
        #[command(flatten)]
        common: Common,
        /// Number of realizations.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Exact entropy-distortion function (or its convex envelope) on a grid.
    CurveOptimal {
        #[command(flatten)]
        common: Common,
        /// Comma-separated values or `log:lo:hi:count`; default 200 log points in [1e-4, 1/6].
        #[arg(long, value_parser = parse_grid)]
        delta_grid: Option<Grid>,
        /// `optimal-analytic` or `lce`.
        #[arg(long, default_value = "optimal-analytic")]
        family: String,
    },
    /// Analytic rate of the dithered KLT coder on a grid.
    CurveKltBound {
        #[command(flatten)]
        common: Common,
        /// Comma-separated values or `log:lo:hi:count`; default 50 log points in [1e-4, 1/6].
        #[arg(long, value_parser = parse_grid)]
        delta_grid: Option<Grid>,
    },
    /// Train one code and save it.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        training: Training,
        /// Code family (dct2, daub4, klt-sampled, arbitrary-linear, nonlinear-mlp, hybrid).
        #[arg(long)]
        family: Option<String>,
        /// Lagrange multiplier; a single value.
        #[arg(long, value_parser = parse_grid)]
        lambda_grid: Option<Grid>,
        /// Checkpoint destination.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation draws for the final report.
        #[arg(long, default_value_t = 1_000_000)]
        mc_samples: usize,
    },
    /// Evaluate a saved code.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        mc_samples: usize,
    },
    /// Evaluate one family over a delta or lambda grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        training: Training,
        #[arg(long)]
        family: String,
        #[arg(long, value_parser = parse_grid)]
        lambda_grid: Option<Grid>,
        #[arg(long, value_parser = parse_grid)]
        delta_grid: Option<Grid>,
        #[arg(long, default_value_t = 1_000_000)]
        mc_samples: usize,
    },
    /// Entropy excess of result files over the last one.
    Compare {
        /// Sweep CSVs; the last is the reference.
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
        /// CSV destination for the matched points.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A parsed grid; wrapped so clap treats it as one value rather than a list.
#[derive(Clone, Debug)]
struct Grid(Vec<f64>);

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err("expected log:lo:hi:count".into());
        }
        let lo: f64 = parts[0].parse().map_err(|_| format!("bad lower bound `{}`", parts[0]))?;
        let hi: f64 = parts[1].parse().map_err(|_| format!("bad upper bound `{}`", parts[1]))?;
        let count: usize = parts[2].parse().map_err(|_| format!("bad count `{}`", parts[2]))?;
        if !(lo > 0.0 && hi >= lo) || count == 0 {
            return Err("log grid needs 0 < lo <= hi and count >= 1".into());
        }
        return Ok(Grid(log_grid(lo, hi, count)));
    }
    let values = s
        .split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad grid value `{v}`")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("grid is empty".into());
    }
    if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err("grid values must be positive and finite".into());
    }
    Ok(Grid(values))
}

fn configure_workers() -> Result<()> {
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        let workers: usize = raw.trim().parse().with_context(|| format!("{WORKERS_ENV}={raw} is not a count"))?;
        if workers == 0 {
            bail!("{WORKERS_ENV} must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(workers).build_global()?;
    }
    Ok(())
}

fn sweep(spec: SweepSpec) -> Result<()> {
    let result = run_sweep(&spec)?;
    for (p, m) in result.points.iter().zip(&result.meta) {
        println!(
            "{} {}={} H={} bits D={}",
            result.family,
            m.parameter_kind.as_str(),
            m.parameter,
            p.entropy_bits,
            p.distortion
        );
    }
    if let Some(out) = &spec.out {
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_workers()?;
    match cli.command {
        Command::Sample { common, count } => {
            let out = common.out.context("--out is required")?;
            emit_realizations(count, common.n, common.seed, &out)?;
            println!("wrote {count} realizations to {}", out.display());
        }
        Command::CurveOptimal {
            common,
            delta_grid,
            family,
        } => {
            let family: Family = family.parse()?;
            if !matches!(family, Family::OptimalAnalytic | Family::Lce) {
                bail!("curve-optimal takes --family optimal-analytic or lce");
            }
            let grid = delta_grid.map(|g| g.0).unwrap_or_else(|| log_grid(1e-4, SOURCE_VARIANCE, 200));
            sweep(SweepSpec {
                n: common.n,
                seed: common.seed,
                out: common.out,
                ..SweepSpec::new(family, grid)
            })?;
        }
        Command::CurveKltBound { common, delta_grid } => {
            let grid = delta_grid.map(|g| g.0).unwrap_or_else(|| log_grid(1e-4, SOURCE_VARIANCE, 50));
            sweep(SweepSpec {
                n: common.n,
                seed: common.seed,
                out: common.out,
                ..SweepSpec::new(Family::KltBound, grid)
            })?;
        }
        Command::Train {
            common,
            training,
            family,
            lambda_grid,
            checkpoint,
            mc_samples,
        } => {
            let mut cfg = training.load()?;
            if let Some(f) = family {
                cfg.family = f.parse::<CodeFamily>()?;
            }
            if let Some(Grid(grid)) = lambda_grid {
                if grid.len() != 1 {
                    bail!("train takes a single --lambda-grid value");
                }
                cfg.lambda = grid[0];
            }
            cfg.n = common.n;
            cfg.seed = common.seed;
            if let CodeFamily::Fixed(_) = cfg.family {
                if training.latent_dims.is_none() {
                    cfg.latent_dims = cfg.n;
                }
            }
            cfg.validate()?;
            let outcome = train(&cfg, init_code(&cfg)?)?;
            save_checkpoint(&outcome.code, &checkpoint)?;
            let trace_path = common.out.unwrap_or_else(|| trace_csv_path(&checkpoint));
            fs::write(&trace_path, outcome.trace.to_csv()).with_context(|| format!("writing {}", trace_path.display()))?;
            let eval = code_evaluate(&outcome.code, mc_samples, cfg.seed.wrapping_add(1))?;
            println!(
                "{} lambda={} H={} bits D={} active={} converged={}",
                cfg.family,
                cfg.lambda,
                eval.entropy_bits,
                eval.distortion,
                eval.active_dimensions(),
                outcome.converged
            );
            println!("checkpoint {} trace {}", checkpoint.display(), trace_path.display());
        }
        Command::Eval {
            common,
            checkpoint,
            mc_samples,
        } => {
            let code = load_checkpoint(&checkpoint)?;
            let eval = code_evaluate(&code, mc_samples, common.seed)?;
            let usage = latent_dimension_usage(&code, mc_samples, common.seed)?;
            println!(
                "H={} bits (se {}) D={} (se {}) samples={} active={} clamped={}",
                eval.entropy_bits,
                eval.entropy_std_error,
                eval.distortion,
                eval.distortion_std_error,
                eval.n_samples,
                eval.active_dimensions(),
                eval.clamped
            );
            if let Some(out) = common.out {
                fs::write(&out, usage_csv(&usage)).with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Command::Sweep {
            common,
            training,
            family,
            lambda_grid,
            delta_grid,
            mc_samples,
        } => {
            let family: Family = family.parse()?;
            let grid = match family.grid_kind() {
                GridKind::Lambda => lambda_grid.context("this family sweeps --lambda-grid")?.0,
                GridKind::Delta => delta_grid.context("this family sweeps --delta-grid")?.0,
            };
            let out = common.out.context("--out is required")?;
            sweep(SweepSpec {
                family,
                grid,
                samples: mc_samples,
                seed: common.seed,
                n: common.n,
                out: Some(out),
                train: training.load()?,
            })?;
        }
        Command::Compare { files, out } => {
            let report = compare_curves(&files)?;
            print!("{}", report.summary());
            if let Some(out) = out {
                fs::write(&out, report.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
