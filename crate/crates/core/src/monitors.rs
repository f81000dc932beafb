//! Run-time diagnostics evaluated on state snapshots.
//!
//! Zero-mode quantities (`n0_*`, `dyc0_*`, Nash ratio) are norms of the
//! x-average profile on the y-line. Nonzero-mode quantities are norms over the
//! whole channel, computed per wavenumber with the same quadrature as `F`, so
//! `F >= nneq_l2^2 + gradc_neq_l2^2` holds without discretization slack.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PksError, Result};
use crate::grid::{integrate, Field, Grid, TWO_PI};
use crate::hypo::{functional_f_spectral, EpsTriple, FComponents};
use crate::integrator::StepConfig;
use crate::model::{ModelParams, PksState, ShearProfile};
use crate::spectral::{Spectrum, XFft};
use crate::yops;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub n_linf: f64,
    pub n0_l2: f64,
    /// `||dy n0||_2`
    pub n0_h1: f64,
    pub nneq_l2: f64,
    pub gradc_neq_l2: f64,
    pub gradc_neq_linf: f64,
    pub dyc0_linf: f64,
    pub f_total: f64,
    pub f_parts: FParts,
    /// `Phi_k[n]` for `k = 1..=k_report`.
    pub phi: Vec<f64>,
    /// `(1/A) int_0^t ||grad n_neq||_2^2 ds`
    pub h1_accum: f64,
    pub nash_ratio: f64,
    pub hk_ratio: f64,
    pub blowup_flag: bool,
}

/// The four pieces of `F` as written to the CSV.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FParts {
    pub n: f64,
    pub dyc: f64,
    pub dxc: f64,
    pub akc: f64,
}

impl From<FComponents> for FParts {
    fn from(c: FComponents) -> Self {
        Self {
            n: c.n,
            dyc: c.dyc,
            dxc: c.dxc,
            akc: c.akc,
        }
    }
}

impl MonitorRecord {
    /// The enhanced-dissipation quantity `||n_neq||^2 + ||grad c_neq||^2`.
    pub fn h2_quantity(&self) -> f64 {
        self.nneq_l2 * self.nneq_l2 + self.gradc_neq_l2 * self.gradc_neq_l2
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.dt,
            self.mass,
            self.n_linf,
            self.n0_l2,
            self.n0_h1,
            self.nneq_l2,
            self.gradc_neq_l2,
            self.gradc_neq_linf,
            self.dyc0_linf,
            self.f_total,
            self.h1_accum,
            self.nash_ratio,
            self.hk_ratio,
        ]
        .iter()
        .chain(&self.phi)
        .all(|v| v.is_finite())
    }
}

/// `||n0||_2 / (||n0||_1^{2/3} ||dy n0||_2^{1/3})` on the y-line; `0.0` when
/// the ratio is undefined (zero or non-finite profile).
pub fn nash_ratio(n0: &[f64], dy: f64) -> f64 {
    if n0.len() < 2 {
        return 0.0;
    }
    let sq: Vec<f64> = n0.iter().map(|v| v * v).collect();
    let l2 = yops::trapz(&sq, dy).sqrt();
    let l1 = yops::profile_lp(n0, dy, 1.0);
    let h1 = yops::face_gradient_sq(n0, dy).sqrt();
    let den = l1.powf(2.0 / 3.0) * h1.powf(1.0 / 3.0);
    let r = l2 / den;
    if den > 0.0 && r.is_finite() {
        r
    } else {
        0.0
    }
}

/// `||dy c0(t)||_4 / (sup_tau ||n0(tau)||_2 + ||(dy c_in)_0||_4)`.
///
/// `history` holds `||n0||_2` at each record so far; `0/0` is reported as 0.
pub fn heat_kernel_ratio(dyc0_l4: f64, history: &[f64], dyc_in0_l4: f64) -> Result<f64> {
    if history.is_empty() {
        return Err(PksError::InsufficientData(
            "heat-kernel ratio needs at least one zero-mode record".into(),
        ));
    }
    let sup = history.iter().fold(0.0_f64, |m, v| m.max(*v));
    let den = sup + dyc_in0_l4;
    if den == 0.0 {
        return Ok(if dyc0_l4 == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(dyc0_l4 / den)
}

/// Flagged iff `n_linf >= factor * initial`, `dt <= dt_min`, or the record is
/// not finite. A zero initial density has no growth reference.
pub fn blowup_check(record: &MonitorRecord, initial_n_linf: f64, cfg: &StepConfig) -> bool {
    !record.is_finite()
        || grew(record.n_linf, initial_n_linf, cfg.blowup_factor)
        || record.dt <= cfg.dt_min
}

pub(crate) fn grew(n_linf: f64, initial: f64, factor: f64) -> bool {
    initial > 0.0 && n_linf >= factor * initial
}

/// Stateful monitor: everything is recomputed from each snapshot except the
/// time integral of `||grad n_neq||^2` and the running sup of `||n0||_2`.
#[derive(Clone, Debug)]
pub struct Monitor {
    shear: ShearProfile,
    params: ModelParams,
    eps: EpsTriple,
    k_report: usize,
    cfg: StepConfig,
    fft: XFft,
    initial_n_linf: f64,
    dyc_in0_l4: f64,
    n0_history: Vec<f64>,
    last: Option<(f64, f64)>,
    h1_accum: f64,
}

impl Monitor {
    pub fn new(
        initial: &PksState,
        shear: &ShearProfile,
        params: &ModelParams,
        eps: EpsTriple,
        k_report: usize,
        cfg: &StepConfig,
    ) -> Result<Self> {
        let grid = *initial.grid();
        if shear.grid() != &grid {
            return Err(PksError::Dimension("shear profile built for another grid".into()));
        }
        if k_report > grid.nx() / 2 {
            return Err(PksError::Config(format!(
                "k_report = {k_report} exceeds the largest resolved wavenumber {}",
                grid.nx() / 2
            )));
        }
        eps.validate()?;
        let (c0, _) = crate::grid::mode_split(&initial.c);
        let dyc_in0_l4 = yops::profile_lp(&yops::d1(&c0, grid.dy()), grid.dy(), 4.0);
        Ok(Self {
            shear: shear.clone(),
            params: *params,
            eps,
            k_report,
            cfg: *cfg,
            fft: grid.fft(),
            initial_n_linf: initial.n.max_abs(),
            dyc_in0_l4,
            n0_history: Vec::new(),
            last: None,
            h1_accum: 0.0,
        })
    }

    pub fn initial_n_linf(&self) -> f64 {
        self.initial_n_linf
    }

    pub fn h1_accum(&self) -> f64 {
        self.h1_accum
    }

    /// Record for `state`; `dt` is the step size the integrator is using.
    pub fn update(&mut self, state: &PksState, dt: f64) -> Result<MonitorRecord> {
        let grid = *state.grid();
        if &grid != self.shear.grid() {
            return Err(PksError::Dimension("state lives on another grid".into()));
        }
        if !(state.n.is_finite() && state.c.is_finite()) {
            return Ok(self.failed_record(state.t, dt));
        }
        let n_hat = self.fft.forward(state.n.values(), grid.ny());
        let c_hat = self.fft.forward(state.c.values(), grid.ny());
        self.update_spectral(state.t, &n_hat, &c_hat, &state.n, dt)
    }

    /// Record from half spectra. Nonzero-mode quantities come straight from the
    /// spectra, so they stay meaningful far below the round-off level of the
    /// grid values; `n` supplies the pointwise norms.
    pub(crate) fn update_spectral(
        &mut self,
        t: f64,
        n_hat: &Spectrum,
        c_hat: &Spectrum,
        n: &Field,
        dt: f64,
    ) -> Result<MonitorRecord> {
        if !(n_hat.is_finite() && c_hat.is_finite()) {
            return Ok(self.failed_record(t, dt));
        }
        let grid = *n.grid();
        let dy = grid.dy();

        let n0 = n_hat.zero_mode();
        let c0 = c_hat.zero_mode();
        let sq: Vec<f64> = n0.iter().map(|v| v * v).collect();
        let n0_l2 = yops::trapz(&sq, dy).sqrt();
        let n0_h1 = yops::face_gradient_sq(&n0, dy).sqrt();
        let dyc0 = yops::d1(&c0, dy);

        let nn = nonzero_norms(n_hat, c_hat, dy);
        let gradc_neq_linf = self.gradc_neq_linf(c_hat, &grid);

        let f = functional_f_spectral(n_hat, c_hat, &self.shear, &self.params, &self.eps)?;
        let phi = f.per_k.iter().take(self.k_report).map(|(_, c)| c.n).collect();

        let g = nn.grad_n_sq / self.params.a();
        if let Some((t_prev, g_prev)) = self.last {
            self.h1_accum += 0.5 * (g + g_prev) * (t - t_prev).max(0.0);
        }
        self.last = Some((t, g));
        self.n0_history.push(n0_l2);
        let hk_ratio = heat_kernel_ratio(
            yops::profile_lp(&dyc0, dy, 4.0),
            &self.n0_history,
            self.dyc_in0_l4,
        )?;

        let mut rec = MonitorRecord {
            t,
            dt,
            mass: integrate(n),
            n_linf: n.max_abs(),
            n0_l2,
            n0_h1,
            nneq_l2: nn.n_sq.sqrt(),
            gradc_neq_l2: nn.grad_c_sq.sqrt(),
            gradc_neq_linf,
            dyc0_linf: yops::profile_lp(&dyc0, dy, f64::INFINITY),
            f_total: f.total,
            f_parts: f.components.into(),
            phi,
            h1_accum: self.h1_accum,
            nash_ratio: nash_ratio(&n0, dy),
            hk_ratio,
            blowup_flag: false,
        };
        rec.blowup_flag = blowup_check(&rec, self.initial_n_linf, &self.cfg);
        Ok(rec)
    }

    fn failed_record(&self, t: f64, dt: f64) -> MonitorRecord {
        MonitorRecord {
            t,
            dt,
            mass: f64::NAN,
            n_linf: f64::NAN,
            n0_l2: f64::NAN,
            n0_h1: f64::NAN,
            nneq_l2: f64::NAN,
            gradc_neq_l2: f64::NAN,
            gradc_neq_linf: f64::NAN,
            dyc0_linf: f64::NAN,
            f_total: f64::NAN,
            f_parts: FParts {
                n: f64::NAN,
                dyc: f64::NAN,
                dxc: f64::NAN,
                akc: f64::NAN,
            },
            phi: vec![f64::NAN; self.k_report],
            h1_accum: self.h1_accum,
            nash_ratio: f64::NAN,
            hk_ratio: f64::NAN,
            blowup_flag: true,
        }
    }

    /// Pointwise `max |grad c_neq|`: spectral in x, `d1` in y.
    fn gradc_neq_linf(&self, c_hat: &Spectrum, grid: &Grid) -> f64 {
        let (nx, ny) = (grid.nx(), grid.ny());
        let nyq = nx / 2;
        let mut cx = vec![0.0; grid.len()];
        self.fft.inverse_map_into(c_hat, &mut cx, |k, z| {
            if k == nyq {
                Complex64::new(0.0, 0.0)
            } else {
                z * Complex64::new(0.0, k as f64)
            }
        });
        let mut dyc_hat = c_hat.clone();
        for k in 1..=nyq {
            let d = yops::d1(c_hat.slice(k), grid.dy());
            dyc_hat.slice_mut(k).copy_from_slice(&d);
        }
        dyc_hat.slice_mut(0).fill(Complex64::new(0.0, 0.0));
        let mut cy = vec![0.0; grid.len()];
        self.fft.inverse_map_into(&dyc_hat, &mut cy, |_, z| z);
        debug_assert_eq!(cx.len(), nx * ny);
        cx.iter()
            .zip(&cy)
            .fold(0.0_f64, |m, (a, b)| m.max(a.hypot(*b)))
    }
}

struct NonzeroNorms {
    n_sq: f64,
    grad_c_sq: f64,
    grad_n_sq: f64,
}

/// Parseval sums over `k != 0`: `||n_neq||^2`, `||grad c_neq||^2` (central
/// `d1` in y) and `||grad n_neq||^2` (face differences in y).
fn nonzero_norms(n_hat: &Spectrum, c_hat: &Spectrum, dy: f64) -> NonzeroNorms {
    let ny = n_hat.ny();
    let nyq = n_hat.nx() / 2;
    let w = yops::trapz_weights(ny, dy);
    let mut out = NonzeroNorms {
        n_sq: 0.0,
        grad_c_sq: 0.0,
        grad_n_sq: 0.0,
    };
    for k in 1..=nyq {
        let mult = if k == nyq { 1.0 } else { 2.0 } * TWO_PI;
        let kx = if k == nyq { 0.0 } else { k as f64 };
        let nk = n_hat.slice(k);
        let ck = c_hat.slice(k);
        let dyc = yops::d1(ck, dy);
        let mut n_sq = 0.0;
        let mut c_sq = 0.0;
        let mut dyc_sq = 0.0;
        for j in 0..ny {
            n_sq += w[j] * nk[j].norm_sqr();
            c_sq += w[j] * ck[j].norm_sqr();
            dyc_sq += w[j] * dyc[j].norm_sqr();
        }
        let face: f64 = nk
            .windows(2)
            .map(|p| ((p[1] - p[0]) / dy).norm_sqr() * dy)
            .sum();
        out.n_sq += mult * n_sq;
        out.grad_c_sq += mult * (kx * kx * c_sq + dyc_sq);
        out.grad_n_sq += mult * (kx * kx * n_sq + face);
    }
    out
}
