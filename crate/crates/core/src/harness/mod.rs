//! Experiment orchestration: curve sweeps, curve comparison, realization dumps
//! and the CSV/JSON artifacts they produce.

mod compare;
mod csv;
mod sweep;

pub use compare::{compare_curves, read_curve, Comparison, CompareReport, Curve};
pub use csv::{emit_realizations, realizations_csv, trace_csv_path, usage_csv};
pub use sweep::{run_sweep, Family, GridKind, PointMeta, SweepResult, SweepSpec, TOOL_VERSION};
