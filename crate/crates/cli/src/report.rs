//! Run reports, config hashing and the on-disk layout
//! `<out>/<hash prefix>/report.json` plus task-named CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Task;
use crate::CliError;

pub const TOOL: &str = "rk";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex digits of the config hash used as the directory name.
pub const DIR_PREFIX: usize = 16;

/// One named comparison `value` against `bound`.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub bound: f64,
    /// Signed distance to failure; nonnegative exactly when the check
    /// passes, except for boolean checks which carry `±1`.
    pub margin: f64,
}

impl CheckResult {
    /// Passes when `value <= bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        let margin = bound - value;
        CheckResult { name: name.into(), pass: margin >= 0.0, value, bound, margin }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        CheckResult { name: name.into(), pass: ok, value: v, bound: 1.0, margin: if ok { 1.0 } else { -1.0 } }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub task: Task,
    pub config_hash: String,
    pub seed: u64,
    /// The parsed config, seed included, in canonical key order.
    pub config: serde_json::Value,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
    pub results: serde_json::Value,
}

/// CSV artifact: file stem, header and rows.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Results of a task before the report envelope is added.
#[derive(Clone, Debug)]
pub struct TaskOutput {
    pub checks: Vec<CheckResult>,
    pub results: serde_json::Value,
    pub tables: Vec<Table>,
}

/// Canonical JSON (sorted keys) of the config with the effective seed,
/// followed by the bytes of every referenced file.
pub fn config_hash(canonical: &serde_json::Value, files: &[PathBuf]) -> Result<String, CliError> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(canonical).expect("JSON values serialize"));
    for f in files {
        let bytes = fs::read(f).map_err(|e| CliError::Validation(format!("reading {}: {e}", f.display())))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_csv(dir: &Path, t: &Table) -> Result<(), CliError> {
    let path = dir.join(format!("{}.csv", t.name));
    let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
    w.write_record(&t.header).map_err(|e| io(&path, e))?;
    for r in &t.rows {
        w.write_record(r).map_err(|e| io(&path, e))?;
    }
    w.flush().map_err(|e| io(&path, e))
}

/// Writes report, tables and the timing sidecar; returns the run directory.
pub fn write_artifacts(out: &Path, report: &RunReport, tables: &[Table], timing: &serde_json::Value) -> Result<PathBuf, CliError> {
    let dir = out.join(&report.config_hash[..DIR_PREFIX]);
    fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    let mut bytes = serde_json::to_vec_pretty(report).expect("reports serialize");
    bytes.push(b'\n');
    let path = dir.join("report.json");
    fs::write(&path, bytes).map_err(|e| io(&path, e))?;
    for t in tables {
        write_csv(&dir, t)?;
    }
    let path = dir.join("timing.json");
    fs::write(&path, serde_json::to_vec_pretty(timing).expect("timing serializes")).map_err(|e| io(&path, e))?;
    Ok(dir)
}

pub fn fmt(x: f64) -> String {
    format!("{x}")
}

pub fn fmt_vec<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}
