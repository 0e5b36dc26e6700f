//! On-disk artifacts of a run: field snapshots (raw little-endian doubles,
//! row-major, with a JSON sidecar), the diagnostics CSV, and JSON documents.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{csv_row, DiagnosticsRecord, CSV_HEADER};
use crate::error::{Error, Result};
use crate::grid::SpectralField;
use crate::integrator::{Observer, SimState};

/// Sidecar metadata next to each raw snapshot.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub time: f64,
    pub field: String,
}

/// Write `stem.raw` (row-major f64, little endian) and `stem.json`.
pub fn write_snapshot(stem: &Path, field: &mut SpectralField, time: f64, name: &str) -> Result<()> {
    if let Some(parent) = stem.parent() {
        fs::create_dir_all(parent)?;
    }
    let grid = field.grid().clone();
    let meta = SnapshotMeta {
        nx: grid.nx(),
        ny: grid.ny(),
        lx: grid.lx(),
        ly: grid.ly(),
        time,
        field: name.to_string(),
    };
    let values = field.real();
    let mut raw = BufWriter::new(File::create(stem.with_extension("raw"))?);
    for v in values.iter() {
        raw.write_all(&v.to_le_bytes())?;
    }
    raw.flush()?;
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(stem.with_extension("json"), json)?;
    Ok(())
}

/// Read a snapshot given either the `.raw`, the `.json`, or the bare stem.
pub fn read_snapshot(path: &Path) -> Result<(Array2<f64>, SnapshotMeta)> {
    let stem = path.with_extension("");
    let meta: SnapshotMeta =
        serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
    let bytes = fs::read(stem.with_extension("raw"))?;
    let expected = meta.nx * meta.ny * 8;
    if bytes.len() != expected {
        return Err(Error::invalid_argument(format!(
            "snapshot {} holds {} bytes, expected {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let mut values = Array2::zeros((meta.nx, meta.ny));
    for (slot, chunk) in values.iter_mut().zip(bytes.chunks_exact(8)) {
        *slot = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
    }
    Ok((values, meta))
}

/// Observer writing the diagnostics CSV at a step cadence.
pub struct CsvWriter {
    writer: BufWriter<File>,
    every: u64,
}

impl CsvWriter {
    pub fn create(path: &Path, every: u64) -> Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut writer = BufWriter::new(File::create(path)?);
        writeln!(writer, "{CSV_HEADER}")?;
        Ok(CsvWriter {
            writer,
            every: every.max(1),
        })
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

impl Observer for CsvWriter {
    fn on_record(&mut self, state: &SimState, record: &DiagnosticsRecord) -> Result<()> {
        if state.step_index % self.every == 0 {
            writeln!(self.writer, "{}", csv_row(record))?;
        }
        Ok(())
    }
}

/// Observer writing `snapshots/NNNNNN.{raw,json}` of `w` at a step cadence.
pub struct SnapshotWriter {
    dir: PathBuf,
    every: u64,
}

impl SnapshotWriter {
    pub fn new(dir: PathBuf, every: u64) -> Self {
        SnapshotWriter {
            dir,
            every: every.max(1),
        }
    }
}

impl Observer for SnapshotWriter {
    fn on_record(&mut self, state: &SimState, _record: &DiagnosticsRecord) -> Result<()> {
        if state.step_index % self.every != 0 {
            return Ok(());
        }
        let stem = self.dir.join(format!("{:06}", state.step_index));
        // the run loop materializes the samples before observers fire
        let values = state
            .w
            .cached_real()
            .ok_or_else(|| Error::invalid_argument("snapshot needs materialized samples"))?
            .clone();
        let mut copy = SpectralField::from_real(state.w.grid(), values)?;
        write_snapshot(&stem, &mut copy, state.t, "w")
    }
}

/// Observer tracking the largest boundary-ring magnitude of `w` over the
/// run, the truncation telemetry for the periodic-box approximation.
#[derive(Default)]
pub struct BoundaryTracker {
    pub max_ring: f64,
}

impl Observer for BoundaryTracker {
    fn on_record(&mut self, state: &SimState, _record: &DiagnosticsRecord) -> Result<()> {
        if let Some(values) = state.w.cached_real() {
            let check = crate::initial::boundary_check(values);
            self.max_ring = self.max_ring.max(check.ring_max);
        }
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
