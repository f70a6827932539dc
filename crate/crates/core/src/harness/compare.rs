use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{domain, io_err, Error, Result};

use super::csv::{csv_error, Table};

/// `(distortion, entropy)` points of one result file, sorted by distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn new(label: impl Into<String>, mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return domain("curve has no points");
        }
        if points.iter().any(|(d, h)| !d.is_finite() || !h.is_finite()) {
            return domain("curve points must be finite");
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        points.dedup_by(|a, b| a.0 == b.0);
        Ok(Self {
            label: label.into(),
            points,
        })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Piecewise-linear entropy at distortion `d` inside the range.
    pub fn entropy_at(&self, d: f64) -> Option<f64> {
        let (lo, hi) = self.range();
        if d < lo || d > hi {
            return None;
        }
        let idx = self.points.partition_point(|p| p.0 < d);
        if idx < self.points.len() && self.points[idx].0 == d {
            return Some(self.points[idx].1);
        }
        let (d0, h0) = self.points[idx - 1];
        let (d1, h1) = self.points[idx];
        Some(h0 + (h1 - h0) * (d - d0) / (d1 - d0))
    }
}

/// Reads the `family`, `entropy_bits` and `distortion` columns of a sweep CSV.
pub fn read_curve(path: &Path) -> Result<Curve> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Domain(format!("{}: missing `{name}` column", path.display())))
    };
    let (ch, cd) = (col("entropy_bits")?, col("distortion")?);
    let cf = col("family").ok();
    let mut label = None;
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let parse = |c: usize| -> Result<f64> {
            record
                .get(c)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Domain(format!("{}: bad value on row {}", path.display(), i + 2)))
        };
        points.push((parse(cd)?, parse(ch)?));
        if label.is_none() {
            label = cf.and_then(|c| record.get(c)).map(str::to_string);
        }
    }
    Curve::new(label.unwrap_or_else(|| path.display().to_string()), points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label: String,
    pub source: PathBuf,
    /// `(distortion, entropy, reference entropy)` at this curve's own points
    /// inside the shared range.
    pub rows: Vec<(f64, f64, f64)>,
}

impl Comparison {
    pub fn excess(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.1 - r.2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub reference: String,
    pub comparisons: Vec<Comparison>,
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut table = Table::new([
            "family",
            "reference",
            "distortion",
            "entropy_bits",
            "reference_entropy_bits",
            "excess_bits",
            "ratio",
        ]);
        for c in &self.comparisons {
            for &(d, h, r) in &c.rows {
                let ratio = if r != 0.0 { (h / r).to_string() } else { String::new() };
                table.row([
                    c.label.clone(),
                    self.reference.clone(),
                    d.to_string(),
                    h.to_string(),
                    r.to_string(),
                    (h - r).to_string(),
                    ratio,
                ]);
            }
        }
        table.finish()
    }

    pub fn summary(&self) -> String {
        let mut s = format!("reference: {}\n", self.reference);
        for c in &self.comparisons {
            let ex: Vec<f64> = c.excess().collect();
            let min = ex.iter().copied().fold(f64::INFINITY, f64::min);
            let max = ex.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = ex.iter().sum::<f64>() / ex.len() as f64;
            let _ = writeln!(
                s,
                "{} ({}): {} matched points, excess bits min {min:.6} mean {mean:.6} max {max:.6}",
                c.label,
                c.source.display(),
                ex.len()
            );
        }
        s
    }
}

/// Entropy excess of every curve over the last one (the reference), matched
/// at each curve's distortions inside the shared range.
pub fn compare_curves(paths: &[PathBuf]) -> Result<CompareReport> {
    if paths.len() < 2 {
        return domain("compare needs at least two result files");
    }
    let curves = paths.iter().map(|p| read_curve(p)).collect::<Result<Vec<_>>>()?;
    let reference = &curves[curves.len() - 1];
    let (rlo, rhi) = reference.range();
    let mut comparisons = Vec::new();
    for (curve, path) in curves.iter().zip(paths).take(curves.len() - 1) {
        let (lo, hi) = curve.range();
        let rows: Vec<(f64, f64, f64)> = curve
            .points
            .iter()
            .filter_map(|&(d, h)| reference.entropy_at(d).map(|r| (d, h, r)))
            .collect();
        if rows.is_empty() {
            return Err(Error::DisjointCurves(format!(
                "{} covers D in [{lo}, {hi}] but reference {} covers [{rlo}, {rhi}]",
                curve.label, reference.label
            )));
        }
        comparisons.push(Comparison {
            label: curve.label.clone(),
            source: path.clone(),
            rows,
        });
    }
    Ok(CompareReport {
        reference: reference.label.clone(),
        comparisons,
    })
}
