use ndarray::{Array1, Array2};
use sawbridge_core::neural::*;
use sawbridge_core::transform::*;

fn small(family: CodeFamily, lambda: f64, steps: usize) -> TrainConfig {
    TrainConfig {
        family,
        lambda,
        steps,
        batch: 64,
        n: 32,
        latent_dims: if let CodeFamily::Fixed(_) = family { 32 } else { 2 },
        hidden_units: 12,
        eval_every: (steps / 4).max(1),
        eval_samples: 4096,
        ..TrainConfig::default()
    }
}

#[test]
fn config_text_round_trips() {
    let cfg = TrainConfig {
        family: CodeFamily::Fixed(FixedKind::Daub4),
        lambda: 123.5,
        noise_proxy: false,
        ..TrainConfig::default()
    };
    let text = cfg.to_kv_string();
    assert_eq!(TrainConfig::from_kv_str(&text).unwrap(), cfg);
    let with_comments = "# pilot\nlambda = 7.5   # trailing\n\nfamily = hybrid\n";
    let parsed = TrainConfig::from_kv_str(with_comments).unwrap();
    assert_eq!(parsed.lambda, 7.5);
    assert_eq!(parsed.family, CodeFamily::Hybrid);
    assert!(TrainConfig::from_kv_str("lambda = -1").is_err());
    assert!(TrainConfig::from_kv_str("steps = 0").is_err());
    assert!(TrainConfig::from_kv_str("bogus = 1").is_err());
    assert!(TrainConfig::from_kv_str("lambda 3").is_err());
    assert!(TrainConfig::from_kv_str("family = wavelet").is_err());
}

#[test]
fn learning_rate_decays_at_eighty_percent() {
    let cfg = TrainConfig {
        steps: 100,
        ..TrainConfig::default()
    };
    assert_eq!(cfg.learning_rate_at(79), 1e-3);
    assert!((cfg.learning_rate_at(80) - 1e-4).abs() < 1e-18);
}

#[test]
fn uniform_model_gives_constant_rate() {
    let d = 3;
    let b = 16;
    let f = ScaledOrthonormal::tied(FixedKind::Dct2, 32, Array1::from_elem(d, 0.5)).unwrap();
    let code = TransformCode::new(Transform::Fixed(f), FactorizedEntropyModel::uniform(d, b)).unwrap();
    let x = realization_rows(&[0, 5, 17, 32], 32);
    let noise = Array2::from_shape_fn((4, d), |(r, k)| 0.1 * r as f64 - 0.2 * k as f64);
    let terms = surrogate_loss(&code, BatchInput::Signals(&x), 9.0, Relaxation::Noise(&noise)).unwrap();
    assert!((terms.rate_bits - d as f64 * ((2 * b + 1) as f64).log2()).abs() < 1e-12);
    assert_eq!(terms.clamped, 0);
}

#[test]
fn zero_lambda_leaves_only_the_rate() {
    let cfg = small(CodeFamily::NonlinearMlp, 1.0, 1);
    let code = init_code(&cfg).unwrap();
    let x = realization_rows(&[3, 9], 32);
    let noise = Array2::from_elem((2, 2), 0.25);
    let t = surrogate_loss(&code, BatchInput::Signals(&x), 0.0, Relaxation::Noise(&noise)).unwrap();
    assert_eq!(t.loss, t.rate_bits);
    assert!(t.distortion > 0.0);
}

#[test]
fn training_is_bitwise_reproducible() {
    let cfg = small(CodeFamily::NonlinearMlp, 30.0, 40);
    let a = train(&cfg, init_code(&cfg).unwrap()).unwrap();
    let b = train(&cfg, init_code(&cfg).unwrap()).unwrap();
    assert_eq!(a.trace.to_csv(), b.trace.to_csv());
    assert_eq!(checkpoint_bytes(&a.code), checkpoint_bytes(&b.code));
    let steps: Vec<usize> = a.trace.points.iter().map(|p| p.step).collect();
    assert_eq!(steps, vec![10, 20, 30, 40]);
    assert!(a.trace.to_csv().starts_with("step,surrogate_loss,entropy_bits,distortion\n"));
}

#[test]
fn every_family_trains_and_stays_normalized() {
    for family in [
        CodeFamily::NonlinearMlp,
        CodeFamily::ArbitraryLinear,
        CodeFamily::Hybrid,
        CodeFamily::Fixed(FixedKind::Dct2),
        CodeFamily::Fixed(FixedKind::Daub4),
        CodeFamily::Fixed(FixedKind::KltSampled),
    ] {
        let mut cfg = small(family, 50.0, 30);
        cfg.refit_entropy_model = false;
        let out = train(&cfg, init_code(&cfg).unwrap()).unwrap();
        for row in out.code.entropy.pmf().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12, "{family}");
        }
        let e = code_evaluate(&out.code, 2000, 5).unwrap();
        assert!(e.entropy_bits >= 0.0 && e.distortion >= 0.0, "{family}");
    }
}

#[test]
fn straight_through_training_runs() {
    let mut cfg = small(CodeFamily::Fixed(FixedKind::Dct2), 200.0, 50);
    cfg.noise_proxy = false;
    let out = train(&cfg, init_code(&cfg).unwrap()).unwrap();
    let steps: Vec<usize> = out.trace.points.iter().map(|p| p.step).collect();
    assert_eq!(steps, vec![12, 24, 36, 48, 50]);
}

#[test]
fn non_finite_parameters_abort_with_a_dump() {
    let cfg = small(CodeFamily::NonlinearMlp, 10.0, 5);
    let mut code = init_code(&cfg).unwrap();
    if let Transform::Mlp { analysis, .. } = &mut code.transform {
        analysis.layers[0].weight[[0, 0]] = f64::NAN;
    }
    match train(&cfg, code) {
        Err(sawbridge_core::Error::Diverged { step, detail }) => {
            assert_eq!(step, 1);
            assert!(detail.contains("max |param|"));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn lambda_sweep_trades_rate_for_distortion() {
    let mut last: Option<(f64, f64)> = None;
    for lambda in [20.0, 200.0, 2000.0] {
        let mut cfg = small(CodeFamily::Fixed(FixedKind::Dct2), lambda, 1500);
        cfg.batch = 128;
        let out = train(&cfg, init_code(&cfg).unwrap()).unwrap();
        assert!(out.converged, "lambda {lambda}");
        let e = code_evaluate(&out.code, 100_000, 9).unwrap();
        if let Some((h, d)) = last {
            assert!(e.distortion <= d, "lambda {lambda}: {} > {d}", e.distortion);
            assert!(e.entropy_bits >= h);
        }
        last = Some((e.entropy_bits, e.distortion));
    }
}

#[test]
fn zero_rate_trained_code_has_no_active_dimensions() {
    let mut cfg = small(CodeFamily::Fixed(FixedKind::KltSampled), 0.5, 600);
    cfg.learning_rate = 1e-2;
    let out = train(&cfg, init_code(&cfg).unwrap()).unwrap();
    let usage = latent_dimension_usage(&out.code, 50_000, 1).unwrap();
    assert_eq!(usage.len(), 32);
    assert!(usage.iter().all(|u| !u.active), "{usage:?}");
}

#[test]
fn linear_network_matches_its_dense_pair() {
    let cfg = small(CodeFamily::ArbitraryLinear, 80.0, 200);
    let out = train(&cfg, init_code(&cfg).unwrap()).unwrap();
    let pair = out.code.transform.linear_pair().unwrap();
    assert_eq!(pair.kind, LinearKind::ArbitraryLinear);
    let n = out.code.n();
    let counts = jump_index_counts(21, 50_000, n);
    let log2p = out.code.entropy.log2_pmf();
    let b = out.code.entropy.half_width();
    let (mut rate, mut dist, mut total) = (0.0, 0.0, 0.0);
    for (j, &c) in counts.iter().enumerate().filter(|(_, &c)| c > 0) {
        let x = realization_rows(&[j], n).row(0).to_vec();
        let y = pair.analysis.dot(&Array1::from(x.clone())) + &pair.analysis_bias;
        let (q, _) = quantize(y.as_slice().unwrap(), b);
        let r: f64 = q.iter().enumerate().map(|(k, &v)| -log2p[[k, out.code.entropy.column(v)]]).sum();
        let qf = Array1::from_iter(q.iter().map(|&v| v as f64));
        let xh = pair.synthesis.dot(&qf) + &pair.synthesis_bias;
        let mse = x.iter().zip(xh.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
        rate += c as f64 * r;
        dist += c as f64 * mse;
        total += c as f64;
    }
    let e = code_evaluate(&out.code, 50_000, 21).unwrap();
    assert!((e.entropy_bits - rate / total).abs() < 1e-9);
    assert!((e.distortion - dist / total).abs() < 1e-12);
}

#[test]
fn adam_converges_on_a_quadratic() {
    let mut p = vec![3.0, -2.0];
    let mut adam = Adam::new(&[2]);
    for _ in 0..2000 {
        let g = vec![2.0 * p[0], 2.0 * p[1]];
        adam.step(vec![&mut p[..]], &[g], &[0.05]);
    }
    assert!(p.iter().all(|v| v.abs() < 1e-2), "{p:?}");
}

#[test]
fn trace_convergence_flag() {
    let point = |step, loss| TracePoint {
        step,
        surrogate_loss: loss,
        entropy_bits: 0.0,
        distortion: 0.0,
    };
    let ok = TrainTrace {
        points: vec![point(1, 3.0), point(2, 2.0), point(3, 2.08)],
    };
    assert!(ok.converged());
    let bad = TrainTrace {
        points: vec![point(1, 3.0), point(2, 2.0), point(3, 2.2)],
    };
    assert!(!bad.converged());
}
