//! One-parameter sweeps over a base document.
//!
//! Every value gets its own run directory `<out>/<param>=<value>`. A run that
//! aborts or fails to configure is recorded as a row and the sweep moves on.
//! When the swept parameter is `model.A`, the fitted rates of the flowing runs
//! are passed to [`scaling_slope`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Table;

use super::config::{apply_override, from_document};
use super::execute;
use super::output::{ensure_dir, write_json};
use crate::error::{PksError, Result};
use crate::hypo::scaling_slope;

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<String>,
}

impl SweepSpec {
    pub fn new(param: &str, values: Vec<String>) -> Result<Self> {
        if values.len() < 2 {
            return Err(PksError::Config(format!(
                "a sweep needs at least 2 values, got {}",
                values.len()
            )));
        }
        let spec = Self {
            param: param.trim().to_owned(),
            values,
        };
        if spec.is_flow_amplitude() {
            for v in &spec.values {
                match v.parse::<f64>() {
                    Ok(a) if a.is_finite() && a >= 0.0 => {}
                    _ => {
                        return Err(PksError::Config(format!(
                            "model.A values must be non-negative numbers, got '{v}'"
                        )))
                    }
                }
            }
        }
        Ok(spec)
    }

    /// Comma-separated list.
    pub fn parse_values(list: &str) -> Vec<String> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect()
    }

    fn is_flow_amplitude(&self) -> bool {
        self.param.eq_ignore_ascii_case("model.a")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    /// A run status, or `error` when the run could not start or failed.
    pub status: String,
    pub reason: Option<String>,
    pub steps: Option<u64>,
    pub t_final: Option<f64>,
    pub rate: Option<f64>,
    pub r_squared: Option<f64>,
    pub directory: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: String,
    pub rows: Vec<SweepRow>,
    /// Slope of `log rate` against `log A` over flowing, completed runs.
    pub slope: Option<f64>,
    pub slope_note: Option<String>,
}

fn slug(param: &str, value: &str) -> String {
    format!("{param}={value}")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._=-+".contains(c) { c } else { '_' })
        .collect()
}

/// Runs `base` with `overrides` once per value and writes the aggregate table.
pub fn sweep(
    spec: &SweepSpec,
    base: &Table,
    overrides: &[(String, String)],
    out: &Path,
    scenario: Option<&str>,
) -> Result<SweepReport> {
    let out = ensure_dir(out)?;
    let mut rows = Vec::with_capacity(spec.values.len());
    for value in &spec.values {
        let dir = out.join(slug(&spec.param, value));
        let mut doc = base.clone();
        let attempt = (|| {
            apply_override(&mut doc, &spec.param, value)?;
            let dir_literal = toml::Value::String(dir.to_string_lossy().into_owned()).to_string();
            let mut all = overrides.to_vec();
            all.push(("output.directory".into(), dir_literal));
            let cfg = from_document(doc, &all)?;
            execute(&cfg, scenario)
        })();
        rows.push(match attempt {
            Ok(r) => SweepRow {
                value: value.clone(),
                status: r.outcome.status.as_str().into(),
                reason: r.outcome.reason.clone(),
                steps: Some(r.outcome.steps),
                t_final: Some(r.outcome.final_state.t),
                rate: r.fit.rate,
                r_squared: r.fit.r_squared,
                directory: dir,
            },
            Err(e) => SweepRow {
                value: value.clone(),
                status: "error".into(),
                reason: Some(e.to_string()),
                steps: None,
                t_final: None,
                rate: None,
                r_squared: None,
                directory: dir,
            },
        });
    }

    let (slope, slope_note) = if spec.is_flow_amplitude() {
        let pairs: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.status == "completed")
            .filter_map(|r| Some((r.value.parse::<f64>().ok()?, r.rate?)))
            .filter(|(a, _)| *a > 0.0)
            .collect();
        match scaling_slope(&pairs) {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("slope is only reported for model.A sweeps".into()))
    };
    let report = SweepReport {
        param: spec.param.clone(),
        rows,
        slope,
        slope_note,
    };
    write_table(&out.join(SWEEP_CSV), &report)?;
    write_json(&out.join(SWEEP_JSON), &report)?;
    Ok(report)
}

fn write_table(path: &Path, report: &SweepReport) -> Result<()> {
    let err = |e: csv::Error| PksError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["value", "status", "steps", "t_final", "rate", "r_squared", "reason"])
        .map_err(err)?;
    for r in &report.rows {
        w.write_record([
            r.value.clone(),
            r.status.clone(),
            r.steps.map_or(String::new(), |s| s.to_string()),
            opt(r.t_final),
            opt(r.rate),
            opt(r.r_squared),
            r.reason.clone().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| PksError::io(path, e))
}
