//! Run reports, their on-disk layout and run-to-run comparison.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "dbar-lab/run-report/v1";

/// Run-dependent data kept apart so the rest of the report is reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub tool_version: String,
    /// Seconds since the Unix epoch at report creation.
    pub timestamp: u64,
    /// Wall-clock milliseconds per stage.
    pub timings_ms: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema: String,
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub results: Value,
    pub warnings: Vec<String>,
    pub metadata: Metadata,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let r: RunReport = serde_json::from_str(text).map_err(|e| CliError::Config(format!("report: {e}")))?;
        if r.schema != SCHEMA {
            return Err(CliError::Config(format!("unsupported report schema `{}`", r.schema)));
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// JSON of everything except `metadata`.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Value::Object(m) = &mut v {
            m.remove("metadata");
        }
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub path: String,
    pub a: f64,
    pub b: f64,
    pub abs_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub kind: ExperimentKind,
    pub compared_values: usize,
    pub differing_values: usize,
    pub max_abs_delta: f64,
    pub max_rel_delta: f64,
    /// Largest differences first, at most 50.
    pub largest: Vec<DiffEntry>,
    /// Paths present in only one report or holding different non-numeric values.
    pub mismatches: Vec<String>,
    /// Numeric columns found in both reports, row by row.
    pub tables: Vec<SideBySide>,
}

/// `(index, a, b, b - a)`; a missing row shows as `None`.
pub type Row = (usize, Option<f64>, Option<f64>, Option<f64>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideBySide {
    pub path: String,
    pub rows: Vec<Row>,
}

impl SideBySide {
    pub fn to_text(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.10e}"));
        let mut s = format!("{}\n  {:>4} {:>18} {:>18} {:>18}\n", self.path, "k", "a", "b", "delta");
        for (i, a, b, d) in &self.rows {
            s.push_str(&format!("  {i:>4} {:>18} {:>18} {:>18}\n", cell(*a), cell(*b), cell(*d)));
        }
        s
    }
}

/// Numeric columns: arrays of numbers, and numeric fields of arrays of objects (`path[].field`).
fn columns(path: &str, v: &Value, out: &mut Vec<(String, Vec<f64>)>) {
    match v {
        Value::Array(xs) if !xs.is_empty() && xs.iter().all(Value::is_number) => {
            out.push((path.to_string(), xs.iter().map(|x| x.as_f64().unwrap_or(f64::NAN)).collect()));
        }
        Value::Array(xs) if !xs.is_empty() && xs.iter().all(Value::is_object) => {
            if let Value::Object(first) = &xs[0] {
                for (k, f) in first {
                    if f.is_number() {
                        let col = xs.iter().map(|x| x.get(k).and_then(Value::as_f64).unwrap_or(f64::NAN)).collect();
                        out.push((format!("{path}[].{k}"), col));
                    }
                }
            }
        }
        Value::Object(m) => {
            for (k, x) in m {
                columns(&format!("{path}.{k}"), x, out);
            }
        }
        _ => {}
    }
}

fn side_by_side(a: &Value, b: &Value) -> Vec<SideBySide> {
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    columns("results", a, &mut ca);
    columns("results", b, &mut cb);
    let mut out = Vec::new();
    for (path, xa) in ca {
        let Some((_, xb)) = cb.iter().find(|(p, _)| *p == path) else {
            continue;
        };
        let rows = (0..xa.len().max(xb.len()))
            .map(|i| {
                let (p, q) = (xa.get(i).copied(), xb.get(i).copied());
                let d = p.zip(q).map(|(p, q)| q - p);
                (i, p, q, d)
            })
            .collect();
        out.push(SideBySide { path, rows });
    }
    out
}

fn walk(path: &str, a: &Value, b: &Value, out: &mut DiffSummary, entries: &mut Vec<DiffEntry>) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            out.compared_values += 1;
            let d = (x - y).abs();
            if d > 0.0 || x.is_nan() != y.is_nan() {
                out.differing_values += 1;
                out.max_abs_delta = out.max_abs_delta.max(d);
                let scale = x.abs().max(y.abs());
                if scale > 0.0 {
                    out.max_rel_delta = out.max_rel_delta.max(d / scale);
                }
                entries.push(DiffEntry {
                    path: path.to_string(),
                    a: x,
                    b: y,
                    abs_delta: d,
                });
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.mismatches.push(format!("{path}: length {} vs {}", x.len(), y.len()));
            }
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                walk(&format!("{path}[{i}]"), p, q, out, entries);
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            for (k, p) in x {
                match y.get(k) {
                    Some(q) => walk(&format!("{path}.{k}"), p, q, out, entries),
                    None => out.mismatches.push(format!("{path}.{k}: only in first")),
                }
            }
            for k in y.keys().filter(|k| !x.contains_key(*k)) {
                out.mismatches.push(format!("{path}.{k}: only in second"));
            }
        }
        (p, q) if p == q => {}
        (p, q) => out.mismatches.push(format!("{path}: {p} vs {q}")),
    }
}

/// Numeric differences between the results of two runs of the same kind.
pub fn compare_runs(a: &RunReport, b: &RunReport) -> CliResult<DiffSummary> {
    if a.kind != b.kind {
        return Err(CliError::Config(format!(
            "cannot compare a {} report with a {} report",
            a.kind.name(),
            b.kind.name()
        )));
    }
    let mut out = DiffSummary {
        kind: a.kind,
        compared_values: 0,
        differing_values: 0,
        max_abs_delta: 0.0,
        max_rel_delta: 0.0,
        largest: Vec::new(),
        mismatches: Vec::new(),
        tables: side_by_side(&a.results, &b.results),
    };
    let mut entries = Vec::new();
    walk("results", &a.results, &b.results, &mut out, &mut entries);
    entries.sort_by(|p, q| q.abs_delta.total_cmp(&p.abs_delta).then(p.path.cmp(&q.path)));
    entries.truncate(50);
    out.largest = entries;
    Ok(out)
}
