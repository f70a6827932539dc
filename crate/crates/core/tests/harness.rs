use std::fs;
use std::path::PathBuf;

use sawbridge_core::harness::*;
use sawbridge_core::klt_coder::hbar;
use sawbridge_core::optimal::log_grid;

fn spec(family: Family, grid: Vec<f64>, out: Option<PathBuf>) -> SweepSpec {
    SweepSpec {
        out,
        ..SweepSpec::new(family, grid)
    }
}

#[test]
fn optimal_sweep_hits_the_kinks() {
    let r = run_sweep(&spec(Family::OptimalAnalytic, vec![1.0 / 12.0, 1.0 / 24.0], None)).unwrap();
    assert_eq!(r.points.len(), 2);
    assert_eq!(r.meta.len(), 2);
    assert!((r.points[0].entropy_bits - 1.0).abs() < 1e-12);
    assert!((r.points[1].entropy_bits - 2.0).abs() < 1e-12);
    assert_eq!(r.points[1].distortion, 1.0 / 24.0);
    assert_eq!(r.tool_version, TOOL_VERSION);
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(run_sweep(&spec(Family::Lce, vec![], None)).is_err());
    assert!(run_sweep(&spec(Family::Lce, vec![-0.1], None)).is_err());
    assert!("fourier".parse::<Family>().is_err());
    let dir = tempfile::tempdir().unwrap();
    let unwritable = dir.path().join("missing").join("out.csv");
    assert!(run_sweep(&spec(Family::Lce, vec![0.1], Some(unwritable))).is_err());
}

#[test]
fn dithered_sweep_matches_the_bound() {
    let mut s = spec(Family::KltDitheredEmpirical, vec![0.05], None);
    s.samples = 1_000_000;
    s.seed = 4;
    let r = run_sweep(&s).unwrap();
    let p = r.points[0];
    assert!(p.distortion <= 0.051, "D = {}", p.distortion);
    assert!((p.entropy_bits - hbar(0.05).unwrap()).abs() < 0.05, "H = {}", p.entropy_bits);
}

#[test]
fn sweeps_write_reproducible_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let grid = log_grid(1e-3, 0.1, 7);
    run_sweep(&spec(Family::KltBound, grid.clone(), Some(a.clone()))).unwrap();
    run_sweep(&spec(Family::KltBound, grid, Some(b.clone()))).unwrap();
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 8);
    assert!(text.starts_with("family,parameter_kind,parameter,entropy_bits,distortion"));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["family"], "klt-bound");
    assert_eq!(meta["points"].as_array().unwrap().len(), 7);
    // floats survive a round trip through the CSV
    let curve = read_curve(&a).unwrap();
    let again = run_sweep(&spec(Family::KltBound, log_grid(1e-3, 0.1, 7), None)).unwrap();
    for ((d, h), p) in curve.points.iter().zip(&again.points) {
        assert_eq!(*d, p.distortion);
        assert_eq!(*h, p.entropy_bits);
    }
}

#[test]
fn trainable_sweep_records_metadata() {
    let mut s = spec(Family::Dct2, vec![100.0, 400.0], None);
    s.n = 32;
    s.samples = 20_000;
    s.train.steps = 200;
    s.train.batch = 64;
    s.train.eval_every = 100;
    let r = run_sweep(&s).unwrap();
    assert_eq!(r.meta.len(), 2);
    assert!(r.meta.iter().all(|m| m.active_dimensions.is_some() && m.parameter_kind == GridKind::Lambda));
    assert!(r.points[1].distortion <= r.points[0].distortion);
}

fn write_sweep(dir: &std::path::Path, name: &str, family: Family, grid: &[f64]) -> PathBuf {
    let path = dir.join(name);
    run_sweep(&spec(family, grid.to_vec(), Some(path.clone()))).unwrap();
    path
}

#[test]
fn comparisons_against_the_reference_curve() {
    let dir = tempfile::tempdir().unwrap();
    let mut grid = log_grid(1e-4, 1.0 / 6.0, 60);
    grid.extend((1..=20).map(|m| 1.0 / (6.0 * m as f64)));
    let opt = write_sweep(dir.path(), "opt.csv", Family::OptimalAnalytic, &grid);
    let lce = write_sweep(dir.path(), "lce.csv", Family::Lce, &grid);

    let report = compare_curves(&[opt.clone(), lce.clone()]).unwrap();
    let c = &report.comparisons[0];
    assert!(c.excess().all(|e| e >= -1e-12));
    for &(d, h, r) in &c.rows {
        if (1..=20).any(|m| (d - 1.0 / (6.0 * m as f64)).abs() < 1e-15) {
            assert!((h - r).abs() < 1e-12);
        }
    }
    assert!(report.summary().contains("reference: lce"));
    assert!(report.to_csv().starts_with("family,reference,distortion"));

    let self_report = compare_curves(&[opt.clone(), opt.clone()]).unwrap();
    assert!(self_report.comparisons[0].excess().all(|e| e == 0.0));

    let klt = write_sweep(dir.path(), "klt.csv", Family::KltBound, &[1e-2, 1e-3]);
    let vs = compare_curves(&[klt, opt.clone()]).unwrap();
    let ratios: Vec<f64> = vs.comparisons[0].rows.iter().map(|r| r.1 / r.2).collect();
    assert!(ratios.iter().all(|&q| q > 1.0));
    // rows are sorted by distortion: the smaller delta comes first
    assert!(ratios[0] > ratios[1]);

    let far = write_sweep(dir.path(), "far.csv", Family::Lce, &[0.15, 0.16]);
    let near = write_sweep(dir.path(), "near.csv", Family::Lce, &[1e-3, 2e-3]);
    match compare_curves(&[far, near]) {
        Err(sawbridge_core::Error::DisjointCurves(msg)) => assert!(msg.contains("0.15")),
        other => panic!("expected disjoint ranges, got {other:?}"),
    }
    assert!(compare_curves(&[opt]).is_err());
}

#[test]
fn realizations_file_is_deterministic_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    emit_realizations(1, 64, 3, &a).unwrap();
    emit_realizations(1, 64, 3, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(emit_realizations(0, 64, 3, &a).is_err());

    let n = 128;
    let text = realizations_csv(50, n, 8).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap().len(), n + 1);
    for record in reader.records() {
        let row: Vec<f64> = record.unwrap().iter().map(|v| v.parse().unwrap()).collect();
        let (u, x) = (row[0], &row[1..]);
        assert!((0.0..1.0).contains(&u));
        assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)));
        let diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let jumps = diffs.iter().filter(|&&d| d < 0.0).count();
        let interior = u > 0.5 / n as f64 && u < 1.0 - 0.5 / n as f64;
        assert_eq!(jumps, usize::from(interior));
        for d in diffs {
            let ok = (d - 1.0 / n as f64).abs() < 1e-12 || (d - (1.0 / n as f64 - 1.0)).abs() < 1e-12;
            assert!(ok, "step {d}");
        }
    }
}
