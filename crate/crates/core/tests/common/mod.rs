//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::{PI, SQRT_2};

/// Structured brute force for the entropy-distortion function: over every `m`
/// up to `m_max`, configurations of `m` equal cells of width `p` plus one
/// remainder `1 - m p >= 0`, feasible when `m p^2 + (1 - m p)^2 <= 6 delta`.
/// Entropy is concave in `p` for fixed `m`, so the minimum over the feasible
/// interval sits at one of its ends.
pub fn brute_force_entropy_distortion(delta: f64, m_max: usize) -> f64 {
    if delta >= 1.0 / 6.0 {
        return 0.0;
    }
    let xlx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.log2() };
    let target = 6.0 * delta;
    let mut best = f64::INFINITY;
    for m in 1..=m_max {
        let mf = m as f64;
        // m(m+1) p^2 - 2 m p + 1 - target <= 0
        let a = mf * (mf + 1.0);
        let b = -2.0 * mf;
        let c = 1.0 - target;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            continue;
        }
        let r = disc.sqrt();
        let lo = (-b - r) / (2.0 * a);
        let hi = ((-b + r) / (2.0 * a)).min(1.0 / mf);
        for p in [lo, hi] {
            if p <= 0.0 || p > 1.0 / mf || p < lo - 1e-15 {
                continue;
            }
            let q = (1.0 - mf * p).max(0.0);
            let h = -mf * xlx(p) - xlx(q);
            best = best.min(h);
        }
    }
    best
}

/// Arcsine CDF on `[-sqrt 2, sqrt 2]`.
pub fn arcsine_cdf(x: f64) -> f64 {
    0.5 + (x / SQRT_2).clamp(-1.0, 1.0).asin() / PI
}

/// Exact `H(round(Y / step))` for `Y = sqrt(2 lambda_k) cos(pi k U)`, whose law is
/// the arcsine law scaled by `1 / (pi k)`.
pub fn undithered_coefficient_entropy(k: usize, step: f64) -> f64 {
    let scale = 1.0 / (PI * k as f64);
    let amp = SQRT_2 * scale;
    let top = (amp / step).round() as i64 + 1;
    let mut h = 0.0;
    for j in -top..=top {
        let a = (j as f64 - 0.5) * step / scale;
        let b = (j as f64 + 0.5) * step / scale;
        let p = arcsine_cdf(b) - arcsine_cdf(a);
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

/// Relative error with a floor for vanishing gradients.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

pub mod gradcheck {
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use sawbridge_core::neural::{
        parameter_names, parameters_mut, surrogate_loss, surrogate_loss_and_gradient, BatchInput, MlpTransform,
        Relaxation,
    };
    use sawbridge_core::transform::{
        realization_rows, FactorizedEntropyModel, FixedKind, ScaledOrthonormal, Transform, TransformCode,
    };

    pub const N: usize = 8;
    pub const D: usize = 2;
    pub const BATCH: usize = 4;
    pub const HALF_WIDTH: usize = 3;
    pub const FD_STEP: f64 = 1e-5;
    /// Denominator floor for relative errors of near-zero gradient entries.
    pub const REL_FLOOR: f64 = 1e-6;

    pub struct Report {
        pub family: &'static str,
        pub worst_rel_err: f64,
        pub worst_param: String,
        pub entries: usize,
    }

    fn random_logits(rng: &mut ChaCha8Rng) -> FactorizedEntropyModel {
        let logits = Array2::from_shape_simple_fn((D, 2 * HALF_WIDTH + 1), || rng.random_range(-1.0..1.0));
        FactorizedEntropyModel::from_logits(HALF_WIDTH, logits).unwrap()
    }

    fn randomize_biases(net: &mut MlpTransform, rng: &mut ChaCha8Rng) {
        for l in &mut net.layers {
            l.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
    }

    /// Tiny codes of every trainable family with randomized parameters; the
    /// analysis gains are large enough that some relaxed latents leave the support.
    pub fn tiny_codes(seed: u64) -> Vec<(&'static str, TransformCode)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for (name, aw, sw, slope) in [
            ("nonlinear-mlp", vec![N, 6, 6, D], vec![D, 6, 6, N], 0.01),
            ("arbitrary-linear", vec![N, D], vec![D, N], 1.0),
            ("hybrid", vec![N, D], vec![D, 6, 6, N], 0.2),
        ] {
            let mut analysis = MlpTransform::init(&aw, slope, &mut rng).unwrap();
            let mut synthesis = MlpTransform::init(&sw, slope, &mut rng).unwrap();
            let last = analysis.layers.len() - 1;
            analysis.layers[last].weight *= 6.0;
            randomize_biases(&mut analysis, &mut rng);
            randomize_biases(&mut synthesis, &mut rng);
            let code = TransformCode::new(Transform::Mlp { analysis, synthesis }, random_logits(&mut rng)).unwrap();
            out.push((name, code));
        }
        let mut fixed = ScaledOrthonormal::tied(FixedKind::Dct2, N, ndarray::arr1(&[2.5, 4.0])).unwrap();
        fixed.synthesis_scale[1] = 0.3;
        out.push(("dct2", TransformCode::new(Transform::Fixed(fixed), random_logits(&mut rng)).unwrap()));
        out
    }

    /// Central finite differences against the analytic gradient for every entry
    /// of every trainable tensor.
    pub fn check(name: &'static str, code: &TransformCode, seed: u64) -> Report {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let indices: Vec<usize> = (0..BATCH).map(|_| rng.random_range(0..=N)).collect();
        let x = realization_rows(&indices, N);
        let noise = Array2::from_shape_simple_fn((BATCH, D), || rng.random::<f64>() - 0.5);
        let lambda = 7.0;
        let (_, grads) =
            surrogate_loss_and_gradient(code, BatchInput::Signals(&x), lambda, Relaxation::Noise(&noise)).unwrap();
        let names = parameter_names(code);
        let eval = |c: &TransformCode| {
            surrogate_loss(c, BatchInput::Signals(&x), lambda, Relaxation::Noise(&noise)).unwrap().loss
        };
        let mut report = Report {
            family: name,
            worst_rel_err: 0.0,
            worst_param: String::new(),
            entries: 0,
        };
        let mut probe = code.clone();
        for (t, g) in grads.0.iter().enumerate() {
            assert_eq!(g.len(), parameters_mut(&mut probe)[t].len(), "{}", names[t]);
            for i in 0..g.len() {
                let orig = parameters_mut(&mut probe)[t][i];
                parameters_mut(&mut probe)[t][i] = orig + FD_STEP;
                let up = eval(&probe);
                parameters_mut(&mut probe)[t][i] = orig - FD_STEP;
                let down = eval(&probe);
                parameters_mut(&mut probe)[t][i] = orig;
                let fd = (up - down) / (2.0 * FD_STEP);
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(REL_FLOOR);
                report.entries += 1;
                if rel > report.worst_rel_err {
                    report.worst_rel_err = rel;
                    report.worst_param = format!("{}[{i}] (analytic {}, fd {fd})", names[t], g[i]);
                }
            }
        }
        report
    }
}
