//! Real FFTs along x and the half-spectrum container used by the solver.
//!
//! Coefficients follow `f_hat(k, y) = (1/2pi) int e^{-ikx} f dx`, discretized as
//! `(1/nx) sum_i f(x_i, y) e^{-ik x_i}`, so the inverse transform is a plain sum.
//! Only `k = 0..=nx/2` is stored; negative wavenumbers are conjugates.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    nx: usize,
    ny: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            data: vec![Complex64::new(0.0, 0.0); (nx / 2 + 1) * ny],
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of stored wavenumbers, `nx/2 + 1`.
    pub fn nk(&self) -> usize {
        self.nx / 2 + 1
    }

    pub fn slice(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.ny..(k + 1) * self.ny]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.data[k * self.ny..(k + 1) * self.ny]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Zero-mode profile (real part of the `k = 0` slice).
    pub fn zero_mode(&self) -> Vec<f64> {
        self.slice(0).iter().map(|z| z.re).collect()
    }

    /// Copy with every wavenumber outside `lo..=hi` zeroed.
    pub fn band(&self, lo: usize, hi: usize) -> Spectrum {
        let mut out = Spectrum::zeros(self.nx, self.ny);
        for k in lo..=hi.min(self.nk() - 1) {
            out.slice_mut(k).copy_from_slice(self.slice(k));
        }
        out
    }
}

/// Largest wavenumber kept by the 2/3 rule.
pub fn dealias_cutoff(nx: usize) -> usize {
    nx / 3
}

#[derive(Clone)]
pub struct XFft {
    nx: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

impl fmt::Debug for XFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("XFft").field("nx", &self.nx).finish()
    }
}

impl XFft {
    pub fn new(nx: usize) -> Self {
        let mut planner = RealFftPlanner::<f64>::new();
        Self {
            nx,
            r2c: planner.plan_fft_forward(nx),
            c2r: planner.plan_fft_inverse(nx),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Physical values (x fastest, `iy * nx + ix`) to the half spectrum.
    pub fn forward(&self, phys: &[f64], ny: usize) -> Spectrum {
        let mut out = Spectrum::zeros(self.nx, ny);
        self.forward_into(phys, &mut out);
        out
    }

    pub fn forward_into(&self, phys: &[f64], out: &mut Spectrum) {
        let nx = self.nx;
        let ny = out.ny;
        let nk = nx / 2 + 1;
        let scale = 1.0 / nx as f64;
        let mut input = self.r2c.make_input_vec();
        let mut output = self.r2c.make_output_vec();
        let mut scratch = self.r2c.make_scratch_vec();
        for j in 0..ny {
            input.copy_from_slice(&phys[j * nx..(j + 1) * nx]);
            self.r2c
                .process_with_scratch(&mut input, &mut output, &mut scratch)
                .expect("buffers sized by the plan");
            for k in 0..nk {
                out.data[k * ny + j] = output[k] * scale;
            }
        }
    }

    /// Half spectrum to physical values.
    pub fn inverse(&self, spec: &Spectrum) -> Vec<f64> {
        let mut out = vec![0.0; self.nx * spec.ny];
        self.inverse_map_into(spec, &mut out, |_, z| z);
        out
    }

    /// Inverse transform of `map(k, f_hat_k)`; used for derivatives and filters.
    pub fn inverse_map_into<F>(&self, spec: &Spectrum, out: &mut [f64], map: F)
    where
        F: Fn(usize, Complex64) -> Complex64,
    {
        let nx = self.nx;
        let ny = spec.ny;
        let nk = nx / 2 + 1;
        let mut input = self.c2r.make_input_vec();
        let mut output = self.c2r.make_output_vec();
        let mut scratch = self.c2r.make_scratch_vec();
        for j in 0..ny {
            for (k, slot) in input.iter_mut().enumerate().take(nk) {
                *slot = map(k, spec.data[k * ny + j]);
            }
            input[0].im = 0.0;
            input[nk - 1].im = 0.0;
            self.c2r
                .process_with_scratch(&mut input, &mut output, &mut scratch)
                .expect("buffers sized by the plan");
            out[j * nx..(j + 1) * nx].copy_from_slice(&output);
        }
    }
}
