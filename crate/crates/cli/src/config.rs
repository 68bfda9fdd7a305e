//! Flat key-value settings: built-in defaults, then a TOML file, then
//! `--set key=value` overrides, then dedicated flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use heisenberg::identities::Resolution;
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::error::{CliError, CliResult};
use crate::suites;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Core,
    Calculus,
    Quadrature,
    Identities,
    Blowup,
    Solver,
    Ordercalc,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Core,
        Suite::Calculus,
        Suite::Quadrature,
        Suite::Identities,
        Suite::Blowup,
        Suite::Solver,
        Suite::Ordercalc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Core => "core",
            Suite::Calculus => "calculus",
            Suite::Quadrature => "quadrature",
            Suite::Identities => "identities",
            Suite::Blowup => "blowup",
            Suite::Solver => "solver",
            Suite::Ordercalc => "ordercalc",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

fn defaults() -> BTreeMap<String, Value> {
    let f = Value::Float;
    let i = Value::Integer;
    let s = |v: &str| Value::String(v.into());
    let floats = |v: &[f64]| Value::Array(v.iter().map(|&x| Value::Float(x)).collect());
    [
        ("suite", Value::Array(vec![s("all")])),
        ("seed", i(0)),
        ("out", s("heis-out")),
        ("format", s("json")),
        ("resolution_scale", f(1.0)),
        ("skip", Value::Array(vec![])),
        ("quadrature.n_rho", i(32)),
        ("quadrature.n_theta", i(64)),
        ("quadrature.n_phi", i(128)),
        ("solver.n", i(32)),
        ("solver.n_fine", i(48)),
        ("solver.box_xy", f(2.0)),
        ("solver.box_t", f(4.0)),
        ("solver.bump_amplitude", f(1.5)),
        ("solver.bump_width", f(1.0)),
        ("solver.p", f(3.0)),
        ("sweep.n", i(32)),
        ("sweep.p", floats(&[2.2, 2.5, 2.8])),
        ("sweep.bump_amplitude", f(1.0)),
        ("sweep.bump_width", f(1.0)),
        ("bubble.lambda", f(1.0)),
        ("bubble.x0", floats(&[0.0, 0.0, 0.0])),
        ("bubble.n", i(17)),
        ("bubble.box_xy", f(2.0)),
        ("bubble.box_t", f(4.0)),
        ("pohozaev.case", s("manufactured")),
        ("pohozaev.p", f(3.0)),
        ("pohozaev.radius", f(1.0)),
        ("profile.lambda", f(1.0)),
        ("profile.p", f(3.0)),
        ("profile.r_min", f(1e-2)),
        ("profile.r_max", f(1e2)),
        ("profile.points", i(200)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, Value>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { values: defaults() }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

/// `--set` values are TOML literals; anything that does not parse is a string.
pub fn parse_literal(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

fn bad(key: &str, why: impl fmt::Display) -> CliError {
    CliError::Config(format!("invalid value for key `{key}`: {why}"))
}

impl Settings {
    /// Defaults, overlaid with `file` and then each `key=value` in `sets`.
    pub fn load(file: Option<&Path>, sets: &[String]) -> CliResult<Self> {
        let mut s = Settings::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let mut pairs = Vec::new();
            flatten("", &table, &mut pairs);
            for (k, v) in pairs {
                s.set(&k, v)?;
            }
        }
        for kv in sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{kv}`")))?;
            s.set(k.trim(), parse_literal(v.trim()))?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: Value) -> CliResult<()> {
        let value = match key {
            "suite" => normalize_suites(value)?,
            "skip" => normalize_skips(value)?,
            "format" => match value.as_str() {
                Some("json" | "csv" | "both") => value,
                _ => return Err(bad(key, format!("expected json, csv or both, got {value}"))),
            },
            _ if key.starts_with("tolerance.") => {
                let check = &key["tolerance.".len()..];
                if !suites::CHECK_NAMES.contains(&check) {
                    return Err(CliError::Config(format!("unknown key `{key}`: no check named `{check}`")));
                }
                match value {
                    Value::Float(x) if x >= 0.0 => value,
                    Value::Integer(n) if n >= 0 => Value::Float(n as f64),
                    _ => return Err(bad(key, "expected a nonnegative number")),
                }
            }
            _ => {
                let Some(default) = self.values.get(key) else {
                    return Err(CliError::Config(format!("unknown key `{key}`")));
                };
                coerce(key, default, value)?
            }
        };
        if key == "resolution_scale" && !(value.as_float().is_some_and(|x| x > 0.0 && x.is_finite())) {
            return Err(bad(key, "must be positive"));
        }
        if key == "seed" && value.as_integer().is_some_and(|n| n < 0) {
            return Err(bad(key, "must be nonnegative"));
        }
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    fn get(&self, key: &str) -> &Value {
        self.values.get(key).unwrap_or_else(|| panic!("setting `{key}` has no default"))
    }

    pub fn f64(&self, key: &str) -> f64 {
        match self.get(key) {
            Value::Float(x) => *x,
            Value::Integer(n) => *n as f64,
            v => panic!("setting `{key}` is a {}", type_name(v)),
        }
    }

    pub fn usize(&self, key: &str) -> usize {
        self.get(key).as_integer().map(|n| n.max(0) as usize).expect("integer setting")
    }

    pub fn str(&self, key: &str) -> &str {
        self.get(key).as_str().expect("string setting")
    }

    pub fn f64_list(&self, key: &str) -> Vec<f64> {
        self.get(key)
            .as_array()
            .expect("array setting")
            .iter()
            .map(|v| v.as_float().or(v.as_integer().map(|n| n as f64)).expect("numeric array"))
            .collect()
    }

    pub fn seed(&self) -> u64 {
        self.get("seed").as_integer().expect("integer seed") as u64
    }

    pub fn out(&self) -> PathBuf {
        PathBuf::from(self.str("out"))
    }

    pub fn format(&self) -> Format {
        match self.str("format") {
            "csv" => Format::Csv,
            "both" => Format::Both,
            _ => Format::Json,
        }
    }

    pub fn suites(&self) -> Vec<Suite> {
        let names: Vec<&str> = self.get("suite").as_array().expect("array").iter().filter_map(|v| v.as_str()).collect();
        if names.contains(&"all") {
            return Suite::ALL.to_vec();
        }
        let mut out: Vec<Suite> = names.iter().filter_map(|n| Suite::parse(n)).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn skipped(&self, check: &str) -> bool {
        self.get("skip").as_array().expect("array").iter().any(|v| v.as_str() == Some(check))
    }

    pub fn tolerance(&self, check: &str, default: f64) -> f64 {
        self.values
            .get(&format!("tolerance.{check}"))
            .and_then(Value::as_float)
            .unwrap_or(default)
    }

    pub fn resolution_scale(&self) -> f64 {
        self.f64("resolution_scale")
    }

    /// Quadrature sizes after `resolution_scale`.
    pub fn resolution(&self) -> Resolution {
        Resolution::new(self.usize("quadrature.n_rho"), self.usize("quadrature.n_theta"), self.usize("quadrature.n_phi"))
            .scaled(self.resolution_scale())
    }

    /// A node count after `resolution_scale`, never below `min`.
    pub fn scaled_count(&self, key: &str, min: usize) -> usize {
        ((self.usize(key) as f64 * self.resolution_scale()).round() as usize).max(min)
    }

    /// Everything except the output location, which must not affect report bytes.
    pub fn echo(&self) -> BTreeMap<String, serde_json::Value> {
        self.values
            .iter()
            .filter(|(k, _)| k.as_str() != "out")
            .map(|(k, v)| (k.clone(), toml_to_json(v)))
            .collect()
    }
}

fn coerce(key: &str, default: &Value, value: Value) -> CliResult<Value> {
    match (default, value) {
        (Value::Float(_), Value::Integer(n)) => Ok(Value::Float(n as f64)),
        (Value::Integer(_), Value::Integer(n)) if n >= 0 => Ok(Value::Integer(n)),
        (Value::Integer(_), Value::Integer(_)) => Err(bad(key, "must be nonnegative")),
        (Value::Array(d), Value::Array(items)) => {
            let numeric = d.first().is_none_or(|v| v.is_float());
            if numeric {
                let mut out = Vec::with_capacity(items.len());
                for v in items {
                    match v {
                        Value::Float(x) => out.push(Value::Float(x)),
                        Value::Integer(n) => out.push(Value::Float(n as f64)),
                        other => return Err(bad(key, format!("expected numbers, found {}", type_name(&other)))),
                    }
                }
                Ok(Value::Array(out))
            } else {
                Ok(Value::Array(items))
            }
        }
        (d, v) if type_name(d) == type_name(&v) => Ok(v),
        (d, v) => Err(bad(key, format!("expected {}, got {}", type_name(d), type_name(&v)))),
    }
}

fn string_list(key: &str, value: Value) -> CliResult<Vec<String>> {
    match value {
        Value::String(s) => Ok(s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()),
        Value::Array(items) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(bad(key, format!("expected strings, found {}", type_name(&other)))),
            })
            .collect(),
        other => Err(bad(key, format!("expected a string or list, got {}", type_name(&other)))),
    }
}

fn normalize_suites(value: Value) -> CliResult<Value> {
    let names = string_list("suite", value)?;
    if names.is_empty() {
        return Err(bad("suite", "at least one suite is required"));
    }
    for n in &names {
        if n != "all" && Suite::parse(n).is_none() {
            return Err(bad("suite", format!("unknown suite `{n}`")));
        }
    }
    Ok(Value::Array(names.into_iter().map(Value::String).collect()))
}

fn normalize_skips(value: Value) -> CliResult<Value> {
    let names = string_list("skip", value)?;
    for n in &names {
        if !suites::CHECK_NAMES.contains(&n.as_str()) {
            return Err(bad("skip", format!("no check named `{n}`")));
        }
    }
    Ok(Value::Array(names.into_iter().map(Value::String).collect()))
}

fn toml_to_json(v: &Value) -> serde_json::Value {
    match v {
        Value::String(s) => serde_json::Value::String(s.clone()),
        Value::Integer(n) => serde_json::Value::from(*n),
        Value::Float(x) => serde_json::Number::from_f64(*x).map_or(serde_json::Value::Null, serde_json::Value::Number),
        Value::Boolean(b) => serde_json::Value::Bool(*b),
        Value::Datetime(d) => serde_json::Value::String(d.to_string()),
        Value::Array(a) => serde_json::Value::Array(a.iter().map(toml_to_json).collect()),
        Value::Table(t) => serde_json::Value::Object(t.iter().map(|(k, v)| (k.clone(), toml_to_json(v))).collect()),
    }
}
