//! Complex tridiagonal systems (Thomas algorithm) with a reusable factorization.

use num_complex::Complex64;

use crate::error::{PksError, Result};

/// Row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`;
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Clone, Debug)]
pub struct Tridiag {
    pub lower: Vec<Complex64>,
    pub diag: Vec<Complex64>,
    pub upper: Vec<Complex64>,
}

impl Tridiag {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.len();
        if n == 1 {
            out[0] = self.diag[0] * x[0];
            return;
        }
        out[0] = self.diag[0] * x[0] + self.upper[0] * x[1];
        for i in 1..n - 1 {
            out[i] = self.lower[i] * x[i - 1] + self.diag[i] * x[i] + self.upper[i] * x[i + 1];
        }
        out[n - 1] = self.lower[n - 1] * x[n - 2] + self.diag[n - 1] * x[n - 1];
    }

    pub fn factor(&self) -> Result<TridiagLu> {
        let n = self.len();
        let mut upper_p = vec![Complex64::new(0.0, 0.0); n];
        let mut inv_pivot = vec![Complex64::new(0.0, 0.0); n];
        let mut prev = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let pivot = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] - self.lower[i] * prev
            };
            if !(pivot.norm() > 1e-300) || !pivot.re.is_finite() || !pivot.im.is_finite() {
                return Err(PksError::Internal(format!(
                    "tridiagonal elimination broke down at row {i}"
                )));
            }
            inv_pivot[i] = pivot.inv();
            prev = if i + 1 < n {
                self.upper[i] * inv_pivot[i]
            } else {
                Complex64::new(0.0, 0.0)
            };
            upper_p[i] = prev;
        }
        Ok(TridiagLu {
            lower: self.lower.clone(),
            upper_p,
            inv_pivot,
        })
    }

    pub fn solve(&self, rhs: &mut [Complex64]) -> Result<()> {
        self.factor()?.solve(rhs);
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TridiagLu {
    lower: Vec<Complex64>,
    upper_p: Vec<Complex64>,
    inv_pivot: Vec<Complex64>,
}

impl TridiagLu {
    /// Overwrites `rhs` with the solution.
    pub fn solve(&self, rhs: &mut [Complex64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            let next = rhs[i + 1];
            rhs[i] -= self.upper_p[i] * next;
        }
    }
}
