//! Deterministic artifact writers: diagnostics CSV, NDJSON metadata sidecars
//! and atomic file replacement.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::functionals::DiagnosticsRecord;
use crate::harness::GENERATOR;

pub const TIMESERIES_HEADER: &str =
    "t,dt,mass,energy,entropy,dissipation,l2_total,h1_total,h2_total,u_min,u_max,theta_min,theta_max";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One CSV row of the diagnostics time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
    pub dissipation: f64,
    pub l2_total: f64,
    pub h1_total: f64,
    pub h2_total: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl TimeseriesRow {
    fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.dt,
            self.mass,
            self.energy,
            self.entropy,
            self.dissipation,
            self.l2_total,
            self.h1_total,
            self.h2_total,
            self.u_min,
            self.u_max,
            self.theta_min,
            self.theta_max,
        ]
    }

    fn from_values(v: [f64; 13]) -> Self {
        Self {
            t: v[0],
            dt: v[1],
            mass: v[2],
            energy: v[3],
            entropy: v[4],
            dissipation: v[5],
            l2_total: v[6],
            h1_total: v[7],
            h2_total: v[8],
            u_min: v[9],
            u_max: v[10],
            theta_min: v[11],
            theta_max: v[12],
        }
    }
}

impl From<&DiagnosticsRecord> for TimeseriesRow {
    fn from(r: &DiagnosticsRecord) -> Self {
        Self {
            t: r.t,
            dt: r.dt_used,
            mass: r.mass,
            energy: r.energy,
            entropy: r.entropy,
            dissipation: r.dissipation,
            l2_total: r.l2_total,
            h1_total: r.h1_total,
            h2_total: r.h2_total,
            u_min: r.u_min,
            u_max: r.u_max,
            theta_min: r.theta_min,
            theta_max: r.theta_max,
        }
    }
}

/// Writes the header and one row per record; returns the bytes written.
/// Values use the shortest decimal that parses back to the same `f64`.
pub fn write_timeseries<W: Write + ?Sized>(records: &[DiagnosticsRecord], sink: &mut W) -> io::Result<usize> {
    let rows: Vec<TimeseriesRow> = records.iter().map(TimeseriesRow::from).collect();
    write_rows(&rows, sink)
}

pub fn write_rows<W: Write + ?Sized>(rows: &[TimeseriesRow], sink: &mut W) -> io::Result<usize> {
    let mut buf = String::with_capacity(64 + rows.len() * 200);
    buf.push_str(TIMESERIES_HEADER);
    buf.push('\n');
    for row in rows {
        let cells: Vec<String> = row.values().iter().map(|v| format!("{v:?}")).collect();
        buf.push_str(&cells.join(","));
        buf.push('\n');
    }
    sink.write_all(buf.as_bytes())?;
    Ok(buf.len())
}

/// Reads a file produced by [`write_timeseries`].
pub fn parse_timeseries<R: BufRead>(source: R) -> Result<Vec<TimeseriesRow>> {
    let mut lines = source.lines();
    match lines.next() {
        Some(Ok(h)) if h == TIMESERIES_HEADER => {}
        Some(Ok(h)) => return Err(Error::InvalidArgument(format!("unexpected CSV header {h:?}"))),
        Some(Err(e)) => return Err(e.into()),
        None => return Err(Error::InvalidArgument("empty time series".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let mut v = [0.0; 13];
        let mut n = 0;
        for cell in line.split(',') {
            if n == 13 {
                n += 1;
                break;
            }
            v[n] = cell.parse().map_err(|_| {
                Error::InvalidArgument(format!("row {}: bad value {cell:?}", i + 2))
            })?;
            n += 1;
        }
        if n != 13 {
            return Err(Error::InvalidArgument(format!(
                "row {}: expected 13 columns",
                i + 2
            )));
        }
        rows.push(TimeseriesRow::from_values(v));
    }
    Ok(rows)
}

/// Provenance written next to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub seed: u64,
    pub generator: String,
    /// SHA-256 of the effective configuration, see [`config_hash`].
    pub config_sha256: String,
    pub version: String,
}

impl RunMetadata {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            seed: cfg.ensemble.seed,
            generator: GENERATOR.to_string(),
            config_sha256: config_hash(cfg),
            version: VERSION.to_string(),
        }
    }

    pub fn to_ndjson(&self) -> String {
        let mut s = serde_json::to_string(self).expect("metadata serializes");
        s.push('\n');
        s
    }
}

/// Hash of the canonical configuration text. The output directory is left
/// out so that the same run written to two places hashes the same.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output.directory.clear();
    hex::encode(Sha256::digest(c.to_text().as_bytes()))
}

/// `dir/name.csv` → `dir/name.meta.ndjson`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.ndjson"))
}

/// Stages the content in a temporary file next to `path` and renames it into
/// place, so `path` never holds a partial write.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<usize>
where
    F: FnOnce(&mut dyn Write) -> io::Result<usize>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(".partial-").tempfile_in(dir)?;
    let n = {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        let n = fill(&mut w)?;
        w.flush()?;
        n
    };
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error.to_string()))?;
    Ok(n)
}

fn write_sidecar(path: &Path, meta: &RunMetadata) -> Result<usize> {
    write_text(&sidecar_path(path), &meta.to_ndjson())
}

/// Writes a CSV time series and its metadata sidecar.
pub fn write_timeseries_file(path: &Path, records: &[DiagnosticsRecord], meta: &RunMetadata) -> Result<usize> {
    let n = write_atomic(path, |w| write_timeseries(records, w))?;
    write_sidecar(path, meta)?;
    Ok(n)
}

/// Writes a numeric CSV with the given header, plus its metadata sidecar.
pub fn write_columns(path: &Path, header: &[&str], rows: &[Vec<f64>], meta: &RunMetadata) -> Result<usize> {
    write_sidecar(path, meta)?;
    write_atomic(path, |w| {
        let mut buf = header.join(",");
        buf.push('\n');
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            buf.push_str(&cells.join(","));
            buf.push('\n');
        }
        w.write_all(buf.as_bytes())?;
        Ok(buf.len())
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<usize> {
    write_atomic(path, |w| {
        w.write_all(text.as_bytes())?;
        Ok(text.len())
    })
}
