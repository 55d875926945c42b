//! On-disk layout of a run directory:
//!
//! ```text
//! config.json            normalized config echo
//! diagnostics.csv        one row per recorded state
//! snapshots/snap_NNNNN.csv
//! estimate_report.json
//! manifest.json          checksums of everything above
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chgrow_core::{DiagnosticsRecord, Field, RunStatus, State, Trajectory};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{read_json, RunConfig};
use crate::error::{CliError, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const REPORT_FILE: &str = "estimate_report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// 17 significant digits, enough to round-trip every `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn snapshot_name(index: usize) -> String {
    format!("{SNAPSHOT_DIR}/snap_{index:05}.csv")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Files written under one output root, with their checksums.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), files: BTreeMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.root.join(rel), bytes)?;
        self.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    /// Records files written elsewhere under `prefix/`.
    pub fn adopt(&mut self, prefix: &str, files: &BTreeMap<String, String>) {
        for (k, v) in files {
            self.files.insert(format!("{prefix}/{k}"), v.clone());
        }
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// Writes the manifest last; it lists every other file.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<BTreeMap<String, String>> {
        manifest.files = self.files.clone();
        self.write_json(MANIFEST_FILE, &manifest)?;
        Ok(self.files)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub step: usize,
    pub t: f64,
    pub error: String,
    pub last_finite_record: Option<DiagnosticsRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub versions: BTreeMap<String, String>,
    pub config: serde_json::Value,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    #[serde(default)]
    pub hypotheses_overridden: bool,
    #[serde(default)]
    pub hypothesis_violations: Vec<String>,
    /// `int u0 dx`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mass: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize, status: &str) -> Self {
        let versions = BTreeMap::from([
            ("chgrow-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("chgrow-core".to_string(), chgrow_core::VERSION.to_string()),
        ]);
        Self {
            command: command.to_string(),
            versions,
            config: serde_json::to_value(config).expect("serializable"),
            status: status.to_string(),
            failure: None,
            hypotheses_overridden: false,
            hypothesis_violations: Vec::new(),
            initial_mass: None,
            warnings: Vec::new(),
            files: BTreeMap::new(),
        }
    }
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = DiagnosticsRecord::COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let row: Vec<String> = r.as_row().iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Node values including both walls.
pub fn snapshot_csv(u: &Field) -> String {
    let g = u.grid();
    let n = g.n_interior();
    let (left, right) = u.end_values().map_or((0.0, 0.0), |[l, r]| (l, r));
    let mut out = String::from("x,u\n");
    let mut row = |x: f64, v: f64| writeln!(out, "{},{}", fmt_f64(x), fmt_f64(v)).expect("string write");
    row(0.0, left);
    for (i, v) in u.values().iter().enumerate() {
        row(g.x(i), *v);
    }
    row(1.0, right);
    debug_assert_eq!(out.lines().count(), n + 3);
    out
}

fn parse_rows(path: &Path, text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| CliError::data(path, "empty file"))?;
    let got: Vec<&str> = first.split(',').map(str::trim).collect();
    if got != header {
        return Err(CliError::data(path, format!("line 1: expected header {}", header.join(","))));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(CliError::data(
                path,
                format!("line {}: expected {} fields, found {}", k + 2, header.len(), cells.len()),
            ));
        }
        let row = cells
            .iter()
            .zip(header)
            .map(|(c, name)| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::data(path, format!("line {}: column {name}: bad number {c:?}", k + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let rows = parse_rows(path, &read_text(path)?, &DiagnosticsRecord::COLUMNS)?;
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(k, r)| DiagnosticsRecord::from_row(r.try_into().expect("checked width"), k > 0))
        .collect())
}

/// Interior node values of a snapshot file.
pub fn read_snapshot(path: &Path) -> Result<Vec<f64>> {
    let rows = parse_rows(path, &read_text(path)?, &["x", "u"])?;
    if rows.len() < 3 {
        return Err(CliError::data(path, "snapshot needs the two walls and interior nodes"));
    }
    Ok(rows[1..rows.len() - 1].iter().map(|r| r[1]).collect())
}

/// Snapshot files of a run directory in index order.
pub fn snapshot_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let snap_dir = dir.join(SNAPSHOT_DIR);
    let entries = fs::read_dir(&snap_dir).map_err(|e| CliError::io(&snap_dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("snap_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Rebuilds the recorded trajectory of a run directory.
pub fn load_run(dir: &Path) -> Result<(RunConfig, Trajectory)> {
    let cfg: RunConfig = read_json(&dir.join(CONFIG_FILE))?;
    let records = read_diagnostics(&dir.join(DIAGNOSTICS_FILE))?;
    let paths = snapshot_paths(dir)?;
    if paths.len() != records.len() {
        return Err(CliError::data(
            &dir.join(SNAPSHOT_DIR),
            format!("{} snapshots for {} diagnostics rows", paths.len(), records.len()),
        ));
    }
    if records.is_empty() {
        return Err(CliError::data(&dir.join(DIAGNOSTICS_FILE), "no recorded states"));
    }
    let grid = cfg.grid()?;
    let states = paths
        .iter()
        .zip(&records)
        .map(|(p, r)| {
            let values = read_snapshot(p)?;
            let u = Field::pinned(&grid, values).map_err(|e| CliError::data(p, e.to_string()))?;
            Ok(State::new(r.t, u))
        })
        .collect::<Result<Vec<State>>>()?;
    let traj = Trajectory {
        states,
        records,
        scheme: cfg.scheme_config(),
        spec: cfg.coefficient.clone(),
        variant: cfg.variant,
        cadence: cfg.cadence,
        status: RunStatus::Completed,
        last_finite: None,
        warnings: Vec::new(),
    };
    Ok((cfg, traj))
}
