//! Check records, suite summaries and their JSON/CSV export.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::config::{Format, Settings};
use crate::error::{CliError, CliResult};
use crate::json;

pub const TOOL: &str = "heis";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Marker for checks that test the harness itself rather than a statement.
pub const PLUMBING: &str = "plumbing";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
    Error,
}

/// `null` in JSON stands for a non-finite value.
fn nan_if_null<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    /// What the check is about, or [`PLUMBING`].
    pub reference: String,
    pub inputs: BTreeMap<String, Value>,
    pub values: BTreeMap<String, Value>,
    #[serde(deserialize_with = "nan_if_null")]
    pub residual: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub tolerance: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Check {
    pub fn new(suite: &str, name: &str, reference: &str) -> Self {
        Check {
            suite: suite.into(),
            name: name.into(),
            reference: reference.into(),
            inputs: BTreeMap::new(),
            values: BTreeMap::new(),
            residual: f64::NAN,
            tolerance: f64::NAN,
            status: Status::Error,
            message: None,
        }
    }

    pub fn input(mut self, key: &str, v: impl Serialize) -> Self {
        self.inputs.insert(key.into(), serde_json::to_value(v).expect("serializable input"));
        self
    }

    pub fn value(mut self, key: &str, v: impl Serialize) -> Self {
        self.values.insert(key.into(), serde_json::to_value(v).expect("serializable value"));
        self
    }

    /// Passes iff `residual ≤ tolerance` (a NaN residual fails).
    pub fn judge(mut self, residual: f64, tolerance: f64) -> Self {
        self.residual = residual;
        self.tolerance = tolerance;
        self.status = if residual <= tolerance { Status::Pass } else { Status::Fail };
        self
    }

    /// For observed orders: `residual` holds the value, `tolerance` the minimum.
    pub fn at_least(mut self, value: f64, min: f64) -> Self {
        self.residual = value;
        self.tolerance = min;
        self.status = if value >= min { Status::Pass } else { Status::Fail };
        self
    }

    /// For yes/no gates: residual 0 on success, 1 otherwise, tolerance 0.
    pub fn gate(self, ok: bool) -> Self {
        self.judge(if ok { 0.0 } else { 1.0 }, 0.0)
    }

    pub fn skipped(mut self) -> Self {
        self.status = Status::Skipped;
        self.message = Some("skipped by configuration".into());
        self
    }

    pub fn errored(mut self, msg: impl Into<String>) -> Self {
        self.status = Status::Error;
        self.message = Some(msg.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub checks: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub config: BTreeMap<String, Value>,
    pub suites: Vec<SuiteSummary>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Report {
    pub fn new(settings: &Settings, checks: Vec<Check>) -> Self {
        let mut order: Vec<String> = Vec::new();
        for c in &checks {
            if !order.contains(&c.suite) {
                order.push(c.suite.clone());
            }
        }
        let suites = order
            .into_iter()
            .map(|s| {
                let of: Vec<&Check> = checks.iter().filter(|c| c.suite == s).collect();
                let count = |st: Status| of.iter().filter(|c| c.status == st).count();
                SuiteSummary {
                    checks: of.len(),
                    passed: count(Status::Pass),
                    failed: count(Status::Fail),
                    skipped: count(Status::Skipped),
                    errors: count(Status::Error),
                    suite: s,
                }
            })
            .collect();
        let pass = checks.iter().all(Check::passed);
        Report {
            tool: TOOL.into(),
            version: VERSION.into(),
            config: settings.echo(),
            suites,
            checks,
            pass,
        }
    }

    pub fn has_errors(&self) -> bool {
        self.checks.iter().any(|c| c.status == Status::Error)
    }

    /// 0 when everything passes, 3 if a check crashed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.has_errors() {
            3
        } else if self.pass {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        json::to_string(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// One row per check: `suite,check,reference,residual,tolerance,pass`.
    pub fn write_csv<W: Write>(&self, out: W) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["suite", "check", "reference", "residual", "tolerance", "pass"])?;
        for c in &self.checks {
            let status = match c.status {
                Status::Pass => "true",
                Status::Fail => "false",
                Status::Skipped => "skipped",
                Status::Error => "error",
            };
            w.write_record([
                c.suite.as_str(),
                c.name.as_str(),
                c.reference.as_str(),
                &json::fmt_f64(c.residual),
                &json::fmt_f64(c.tolerance),
                status,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.json` and/or `report.csv` into `dir`.
    pub fn export(&self, dir: &Path, format: Format) -> CliResult<Vec<PathBuf>> {
        let mut written = Vec::new();
        if format.json() {
            let path = dir.join("report.json");
            write_atomic(&path, self.to_json().as_bytes())?;
            written.push(path);
        }
        if format.csv() {
            let mut buf = Vec::new();
            self.write_csv(&mut buf)?;
            let path = dir.join("report.csv");
            write_atomic(&path, &buf)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Write-then-rename inside the target directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| CliError::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}
