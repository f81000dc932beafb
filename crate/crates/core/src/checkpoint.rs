//! Restartable snapshots of the integrator.
//!
//! A checkpoint is a JSON document holding the half spectra of `n` and `c`
//! (`k = 0..=nx/2`, each a `ny`-long list of `[re, im]`), the Adams-Bashforth
//! history, and a hash of the resolved configuration. Storing the spectra
//! rather than grid values makes restart bit-exact.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PksError, Result};
use crate::grid::Grid;
use crate::spectral::Spectrum;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub t: f64,
    pub steps: u64,
    pub nx: usize,
    pub ny: usize,
    pub config_hash: String,
    pub n_hat: Vec<[f64; 2]>,
    pub c_hat: Vec<[f64; 2]>,
    pub history: Option<HistoryData>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryData {
    pub dt_prev: f64,
    pub nl_n: Vec<[f64; 2]>,
    pub nl_c: Vec<[f64; 2]>,
}

type Restored = (Spectrum, Spectrum, Option<(f64, Spectrum, Spectrum)>);

fn pack(s: &Spectrum) -> Vec<[f64; 2]> {
    s.as_slice().iter().map(|z| [z.re, z.im]).collect()
}

fn unpack(v: &[[f64; 2]], nx: usize, ny: usize, what: &str) -> Result<Spectrum> {
    let mut s = Spectrum::zeros(nx, ny);
    if v.len() != s.as_slice().len() {
        return Err(PksError::Data(format!(
            "checkpoint field {what} has {} entries, expected {}",
            v.len(),
            s.as_slice().len()
        )));
    }
    for (z, p) in s.as_mut_slice().iter_mut().zip(v) {
        *z = Complex64::new(p[0], p[1]);
    }
    if !s.is_finite() {
        return Err(PksError::Data(format!("checkpoint field {what} is not finite")));
    }
    Ok(s)
}

impl Checkpoint {
    pub(crate) fn capture(
        t: f64,
        steps: u64,
        n_hat: &Spectrum,
        c_hat: &Spectrum,
        history: Option<(f64, &Spectrum, &Spectrum)>,
        config_hash: &str,
    ) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            t,
            steps,
            nx: n_hat.nx(),
            ny: n_hat.ny(),
            config_hash: config_hash.to_owned(),
            n_hat: pack(n_hat),
            c_hat: pack(c_hat),
            history: history.map(|(dt_prev, a, b)| HistoryData {
                dt_prev,
                nl_n: pack(a),
                nl_c: pack(b),
            }),
        }
    }

    pub(crate) fn spectra(&self, grid: &Grid) -> Result<Restored> {
        if self.version != CHECKPOINT_VERSION {
            return Err(PksError::Data(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if (self.nx, self.ny) != (grid.nx(), grid.ny()) {
            return Err(PksError::Dimension(format!(
                "checkpoint grid {}x{} does not match {}x{}",
                self.nx,
                self.ny,
                grid.nx(),
                grid.ny()
            )));
        }
        let n = unpack(&self.n_hat, self.nx, self.ny, "n_hat")?;
        let c = unpack(&self.c_hat, self.nx, self.ny, "c_hat")?;
        let h = match &self.history {
            None => None,
            Some(h) => {
                if !(h.dt_prev > 0.0 && h.dt_prev.is_finite()) {
                    return Err(PksError::Data("checkpoint dt_prev must be positive".into()));
                }
                Some((
                    h.dt_prev,
                    unpack(&h.nl_n, self.nx, self.ny, "nl_n")?,
                    unpack(&h.nl_c, self.nx, self.ny, "nl_c")?,
                ))
            }
        };
        Ok((n, c, h))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| PksError::Internal(format!("checkpoint serialization: {e}")))?;
        fs::write(path, text).map_err(|e| PksError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| PksError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PksError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Refuses to resume under a different configuration.
    pub fn check_hash(&self, expected: &str) -> Result<()> {
        if self.config_hash != expected {
            return Err(PksError::Config(format!(
                "checkpoint was written for configuration {}, current is {}",
                self.config_hash, expected
            )));
        }
        Ok(())
    }
}
