use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{domain, io_err, Error, Result};
use crate::montecarlo::jump_times;
use crate::neural::DimensionUsage;
use crate::process::sample_sawbridge;

/// In-memory CSV writer; floats are written in shortest round-trip form by the callers.
pub(crate) struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub(crate) fn new<I, S>(header: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    pub(crate) fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub(crate) fn finish(self) -> String {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("CSV fields are UTF-8")
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Domain(format!("{}: {e}", path.display()))
}

/// One realization per row: `u` followed by the grid values.
pub fn realizations_csv(count: usize, n: usize, seed: u64) -> Result<String> {
    if count == 0 {
        return domain("count must be at least 1");
    }
    let mut table = Table::new(std::iter::once("u".to_string()).chain((0..n).map(|i| format!("x{i}"))));
    for u in jump_times(seed, count) {
        let r = sample_sawbridge(u, n)?;
        table.row(std::iter::once(u.to_string()).chain(r.signal.values().iter().map(|v| v.to_string())));
    }
    Ok(table.finish())
}

pub fn emit_realizations(count: usize, n: usize, seed: u64, path: &Path) -> Result<()> {
    let text = realizations_csv(count, n, seed)?;
    fs::write(path, text).map_err(io_err(path))
}

/// Per-dimension entropies of a latent usage report.
pub fn usage_csv(usage: &[DimensionUsage]) -> String {
    let mut table = Table::new(["dim", "entropy_bits", "active"]);
    for u in usage {
        table.row([u.dim.to_string(), u.entropy_bits.to_string(), u.active.to_string()]);
    }
    table.finish()
}

/// Sidecar location for a training trace next to `out`.
pub fn trace_csv_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".trace.csv");
    PathBuf::from(p)
}
