//! Persistent outputs: the records CSV, its reader, and the metadata sidecar.
//!
//! Column order is fixed:
//!
//! ```text
//! t, dt, mass, n_linf, n0_l2, n0_h1, nneq_l2, gradc_neq_l2, gradc_neq_linf,
//! dyc0_linf, F_total, F_n, F_dyc, F_dxc, F_Akc, phi_k1 .. phi_kK, h1_accum,
//! nash_ratio, hk_ratio, blowup_flag
//! ```
//!
//! with `K = hypo.k_report`. Floats are written in Rust's shortest round-trip
//! form, so parsing a file back reproduces every value exactly; `blowup_flag`
//! is `0` or `1`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PksError, Result};
use crate::monitors::{FParts, MonitorRecord};

/// Bumped on any change to the column set or order.
pub const SCHEMA_VERSION: &str = "1.0";

pub const RECORDS_CSV: &str = "records.csv";
pub const RECORDS_JSON: &str = "records.json";
pub const METADATA_JSON: &str = "metadata.json";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const CHECKPOINT_JSON: &str = "checkpoint.json";

const HEAD: [&str; 15] = [
    "t",
    "dt",
    "mass",
    "n_linf",
    "n0_l2",
    "n0_h1",
    "nneq_l2",
    "gradc_neq_l2",
    "gradc_neq_linf",
    "dyc0_linf",
    "F_total",
    "F_n",
    "F_dyc",
    "F_dxc",
    "F_Akc",
];
const TAIL: [&str; 4] = ["h1_accum", "nash_ratio", "hk_ratio", "blowup_flag"];

/// Header for `k_report` tracked wavenumbers.
pub fn columns(k_report: usize) -> Vec<String> {
    HEAD.iter()
        .map(|s| s.to_string())
        .chain((1..=k_report).map(|k| format!("phi_k{k}")))
        .chain(TAIL.iter().map(|s| s.to_string()))
        .collect()
}

fn row(r: &MonitorRecord) -> Vec<String> {
    let p = &r.f_parts;
    [
        r.t,
        r.dt,
        r.mass,
        r.n_linf,
        r.n0_l2,
        r.n0_h1,
        r.nneq_l2,
        r.gradc_neq_l2,
        r.gradc_neq_linf,
        r.dyc0_linf,
        r.f_total,
        p.n,
        p.dyc,
        p.dxc,
        p.akc,
    ]
    .iter()
    .chain(&r.phi)
    .chain(&[r.h1_accum, r.nash_ratio, r.hk_ratio])
    .map(|v| format!("{v}"))
    .chain(std::iter::once(if r.blowup_flag { "1" } else { "0" }.to_string()))
    .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> PksError {
    PksError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `records` as CSV; an empty slice gives a header-only file.
pub fn write_csv(path: &Path, records: &[MonitorRecord], k_report: usize) -> Result<()> {
    if let Some(r) = records.iter().find(|r| r.phi.len() != k_report) {
        return Err(PksError::Dimension(format!(
            "record at t = {} has {} phi values, header has {k_report}",
            r.t,
            r.phi.len()
        )));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(columns(k_report)).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record(row(r)).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| PksError::io(path, e))
}

/// A parsed records file.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    /// The table `write_csv` would produce, without touching the disk.
    pub fn from_records(records: &[MonitorRecord], k_report: usize) -> Self {
        Self {
            columns: columns(k_report),
            rows: records
                .iter()
                .map(|r| row(r).iter().map(|s| s.parse().unwrap_or(f64::NAN)).collect())
                .collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let columns: Vec<String> = r
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| PksError::Parse {
                        path: path.to_path_buf(),
                        message: format!("row {}: '{s}' is not a number", i + 1),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(vals);
        }
        Ok(Self { columns, rows })
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| {
            PksError::Data(format!(
                "no column '{name}'; available: {}",
                self.columns.join(", ")
            ))
        })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// `(t, value)` pairs; `h2` is derived as `nneq_l2^2 + gradc_neq_l2^2`.
    pub fn series(&self, name: &str) -> Result<Vec<(f64, f64)>> {
        let t = self.column("t")?;
        let v = if name == "h2" {
            let a = self.column("nneq_l2")?;
            let b = self.column("gradc_neq_l2")?;
            a.iter().zip(&b).map(|(a, b)| a * a + b * b).collect()
        } else {
            self.column(name)?
        };
        Ok(t.into_iter().zip(v).collect())
    }

    /// Rebuilds records; the header must follow the schema.
    pub fn to_records(&self) -> Result<Vec<MonitorRecord>> {
        let k = self
            .columns
            .len()
            .checked_sub(HEAD.len() + TAIL.len())
            .ok_or_else(|| PksError::Data("too few columns for the records schema".into()))?;
        if self.columns != columns(k) {
            return Err(PksError::Data(format!(
                "header does not match schema {SCHEMA_VERSION}: {}",
                self.columns.join(",")
            )));
        }
        Ok(self
            .rows
            .iter()
            .map(|v| {
                let p = 15 + k;
                MonitorRecord {
                    t: v[0],
                    dt: v[1],
                    mass: v[2],
                    n_linf: v[3],
                    n0_l2: v[4],
                    n0_h1: v[5],
                    nneq_l2: v[6],
                    gradc_neq_l2: v[7],
                    gradc_neq_linf: v[8],
                    dyc0_linf: v[9],
                    f_total: v[10],
                    f_parts: FParts {
                        n: v[11],
                        dyc: v[12],
                        dxc: v[13],
                        akc: v[14],
                    },
                    phi: v[15..p].to_vec(),
                    h1_accum: v[p],
                    nash_ratio: v[p + 1],
                    hk_ratio: v[p + 2],
                    blowup_flag: v[p + 3] != 0.0,
                }
            })
            .collect())
    }
}

/// Run metadata written next to the records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: String,
    pub solver_version: String,
    pub scenario: Option<String>,
    pub config_hash: String,
    pub status: String,
    pub reason: Option<String>,
    pub steps: u64,
    pub t_final: f64,
    pub records: usize,
    pub columns: Vec<String>,
    pub fit: Option<FitSummary>,
    pub wall_seconds: f64,
    /// Seconds since the Unix epoch at completion.
    pub finished_at: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub column: String,
    pub window: (f64, f64),
    pub rate: Option<f64>,
    pub r_squared: Option<f64>,
    pub samples: Option<usize>,
    pub error: Option<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| PksError::Internal(format!("json serialization: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| PksError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| PksError::io(dir, e))?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let c = columns(2);
        assert_eq!(c.len(), 21);
        assert_eq!(c[15], "phi_k1");
        assert_eq!(c[16], "phi_k2");
        assert_eq!(c[17], "h1_accum");
        assert_eq!(c.last().unwrap(), "blowup_flag");
    }
}
