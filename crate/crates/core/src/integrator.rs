//! IMEX Crank-Nicolson / Adams-Bashforth 2 time stepping.
//!
//! Every x-wavenumber is advanced with one complex tridiagonal solve that
//! holds diffusion, chemical damping and the shear advection `-i k u(y)`
//! implicitly. Aggregation (and the chemical source `n/A`) is explicit with
//! variable-step AB2; the first step uses forward Euler for the explicit part.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PksError, Result};
use crate::grid::{Field, Grid, SpectralSlice};
use crate::hypo::EpsTriple;
use crate::model::{
    linear_operator_k, FluxScales, FluxWork, HelmholtzSolver, ModelParams, PksState, Regime,
    ShearProfile, NEGATIVITY_TOL, too_negative,
};
use crate::monitors::{Monitor, MonitorRecord};
use crate::spectral::{Spectrum, XFft};
use crate::tridiag::{Tridiag, TridiagLu};

const THETA: f64 = 0.5;
const COUPLING_SAFETY: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub cfl: f64,
    pub blowup_factor: f64,
    pub t_end: f64,
    /// Rescaled time between monitor records.
    pub record_interval: f64,
    /// Largest tolerated `-min n / max|n|` before the run aborts.
    pub negativity_tol: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt_init: 1e-2,
            dt_min: 1e-8,
            dt_max: 0.5,
            cfl: 0.5,
            blowup_factor: 1e3,
            t_end: 1.0,
            record_interval: 0.1,
            negativity_tol: NEGATIVITY_TOL,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt_init", self.dt_init),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("t_end", self.t_end),
            ("record_interval", self.record_interval),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PksError::Config(format!("time.{name} = {v} must be positive")));
            }
        }
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(PksError::Config(format!(
                "need dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(PksError::Config(format!("cfl = {} must lie in (0, 1]", self.cfl)));
        }
        if !(self.blowup_factor > 1.0) {
            return Err(PksError::Config(format!(
                "blowup_factor = {} must exceed 1",
                self.blowup_factor
            )));
        }
        if !(self.negativity_tol >= 0.0) {
            return Err(PksError::Config("negativity_tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Full aggregation system.
    Pks,
    /// `f_t + u f_x = (1/A) Lap f`, evolved in the density slot; no chemical.
    PassiveScalar,
}

/// Crank-Nicolson solve `(I - theta dt L_k) x = b` for one slice, with
/// `L_k = (1/A)(D2 - k^2 - damping) - i k u`.
pub fn implicit_solve_k(
    slice: &SpectralSlice,
    dt: f64,
    params: &ModelParams,
    shear: &ShearProfile,
    damping: f64,
) -> Result<SpectralSlice> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(PksError::Domain(format!("dt = {dt} must be positive")));
    }
    if slice.profile.len() != shear.grid().ny() {
        return Err(PksError::Dimension(format!(
            "slice has {} values, grid has ny = {}",
            slice.profile.len(),
            shear.grid().ny()
        )));
    }
    let m = implicit_matrix(&linear_operator_k(slice.k, damping, params, shear), dt);
    let mut x = slice.profile.clone();
    m.solve(&mut x)?;
    Ok(SpectralSlice::new(slice.k, x))
}

fn implicit_matrix(l: &Tridiag, dt: f64) -> Tridiag {
    let s = -THETA * dt;
    Tridiag {
        lower: l.lower.iter().map(|z| z * s).collect(),
        diag: l.diag.iter().map(|z| z * s + 1.0).collect(),
        upper: l.upper.iter().map(|z| z * s).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtChoice {
    pub dt: f64,
    /// Unclamped CFL value.
    pub raw: f64,
    /// The CFL value fell below `dt_min`.
    pub underflow: bool,
}

fn choose_dt(limits: [f64; 4], cfg: &StepConfig) -> DtChoice {
    let raw = cfg.cfl * limits.into_iter().fold(f64::INFINITY, f64::min);
    if raw < cfg.dt_min {
        DtChoice {
            dt: cfg.dt_min,
            raw,
            underflow: true,
        }
    } else {
        DtChoice {
            dt: raw.min(cfg.dt_max),
            raw,
            underflow: false,
        }
    }
}

fn limit(h: f64, speed: f64) -> f64 {
    if speed > 0.0 {
        h / speed
    } else {
        f64::INFINITY
    }
}

/// Step limits for the explicit flux on `grid`. Besides the advective
/// CFL numbers, the explicit coupling `n -> c -> div(n grad c)` grows at a
/// rate of about `|q| sqrt(n) / A` on wavenumber `q`, and the reaction-like
/// part `n (n - c) / A` at `n / A`. AB2 needs a margin on both, hence the
/// factor 1/2, which keeps `cfl = 1` stable during a collapse.
fn limits(grid: &Grid, shear: &ShearProfile, a: f64, s: FluxScales) -> [f64; 4] {
    let h = grid.dx().min(grid.dy());
    let coupling = if s.n_max > 0.0 {
        COUPLING_SAFETY * a * (h / s.n_max.sqrt()).min(1.0 / s.n_max)
    } else {
        f64::INFINITY
    };
    [
        limit(grid.dx(), shear.max_abs_u()),
        limit(a * grid.dx(), s.sx),
        limit(a * grid.dy(), s.sy),
        coupling,
    ]
}

/// `dt = cfl * min(dx / max|u|, A dx / max|dx c|, A dy / max|dy c|, coupling)`,
/// clamped to `[dt_min, dt_max]`. The chemical gradients are the ones the
/// explicit flux sees: dealiased in x, face differences in y. The coupling
/// limit is `A/2 min(h / sqrt(max n), 1 / max n)` with `h = min(dx, dy)`.
pub fn adapt_dt(
    state: &PksState,
    shear: &ShearProfile,
    params: &ModelParams,
    cfg: &StepConfig,
) -> Result<DtChoice> {
    let grid = *state.grid();
    if shear.grid() != &grid {
        return Err(PksError::Dimension("shear profile built for another grid".into()));
    }
    if !(state.n.is_finite() && state.c.is_finite()) {
        return Err(PksError::Data("state is not finite".into()));
    }
    let fft = grid.fft();
    let n_hat = fft.forward(state.n.values(), grid.ny());
    let c_hat = fft.forward(state.c.values(), grid.ny());
    let mut out = Spectrum::zeros(grid.nx(), grid.ny());
    let scales = FluxWork::new(&grid).flux_into(&fft, &n_hat, &c_hat, &mut out);
    Ok(choose_dt(limits(&grid, shear, params.a(), scales), cfg))
}

#[derive(Clone, Debug, PartialEq)]
struct History {
    dt: f64,
    nl_n: Spectrum,
    nl_c: Spectrum,
}

/// Time stepper holding the spectral state and the AB2 history.
#[derive(Clone, Debug)]
pub struct ImexStepper {
    grid: Grid,
    shear: ShearProfile,
    params: ModelParams,
    mode: Mode,
    fft: XFft,
    helmholtz: Option<HelmholtzSolver>,
    t: f64,
    steps: u64,
    n_hat: Spectrum,
    c_hat: Spectrum,
    history: Option<History>,
    /// `L_k` for `k < nx/2`, density then chemical.
    ops_n: Vec<Tridiag>,
    ops_c: Vec<Tridiag>,
    cached: Option<(u64, Vec<TridiagLu>, Vec<TridiagLu>)>,
    work: Work,
}

/// Buffers reused from step to step.
#[derive(Clone, Debug)]
struct Work {
    flux: FluxWork,
    phys: Vec<f64>,
    spare: Option<(Spectrum, Spectrum)>,
    /// Explicit terms and chemical speeds of the current state.
    pending: Option<Pending>,
}

#[derive(Clone, Debug)]
struct Pending {
    nl_n: Spectrum,
    nl_c: Spectrum,
    scales: FluxScales,
}

impl ImexStepper {
    pub fn new(
        init: &PksState,
        shear: &ShearProfile,
        params: &ModelParams,
        mode: Mode,
    ) -> Result<Self> {
        let grid = *init.grid();
        if shear.grid() != &grid {
            return Err(PksError::Dimension("shear profile built for another grid".into()));
        }
        if !(init.n.is_finite() && init.c.is_finite()) {
            return Err(PksError::Data("initial state is not finite".into()));
        }
        let fft = grid.fft();
        let mut n_hat = fft.forward(init.n.values(), grid.ny());
        let mut c_hat = match mode {
            Mode::Pks => fft.forward(init.c.values(), grid.ny()),
            Mode::PassiveScalar => Spectrum::zeros(grid.nx(), grid.ny()),
        };
        let nyq = grid.nx() / 2;
        n_hat.slice_mut(nyq).fill(Complex64::new(0.0, 0.0));
        c_hat.slice_mut(nyq).fill(Complex64::new(0.0, 0.0));
        let helmholtz = if mode == Mode::Pks && params.regime() == Regime::Elliptic {
            let h = HelmholtzSolver::new(&grid)?;
            c_hat = h.solve_spectrum(&n_hat);
            Some(h)
        } else {
            None
        };
        let ops = |damping: f64| -> Vec<Tridiag> {
            (0..nyq)
                .map(|k| linear_operator_k(k as i64, damping, params, shear))
                .collect()
        };
        let ops_n = ops(0.0);
        let ops_c = if mode == Mode::Pks && params.regime() == Regime::Parabolic {
            ops(1.0)
        } else {
            Vec::new()
        };
        Ok(Self {
            grid,
            shear: shear.clone(),
            params: *params,
            mode,
            fft,
            helmholtz,
            t: init.t,
            steps: 0,
            n_hat,
            c_hat,
            history: None,
            ops_n,
            ops_c,
            cached: None,
            work: Work {
                flux: FluxWork::new(&grid),
                phys: vec![0.0; grid.len()],
                spare: None,
                pending: None,
            },
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shear(&self) -> &ShearProfile {
        &self.shear
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn n_hat(&self) -> &Spectrum {
        &self.n_hat
    }

    pub fn c_hat(&self) -> &Spectrum {
        &self.c_hat
    }

    pub fn density(&self) -> Field {
        Field::from_raw(self.grid, self.fft.inverse(&self.n_hat))
    }

    pub fn chemical(&self) -> Field {
        Field::from_raw(self.grid, self.fft.inverse(&self.c_hat))
    }

    /// Fresh snapshot of the current state.
    pub fn state(&self) -> PksState {
        PksState {
            t: self.t,
            n: self.density(),
            c: self.chemical(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.n_hat.is_finite() && self.c_hat.is_finite()
    }

    fn evolves_chemical(&self) -> bool {
        self.mode == Mode::Pks && self.params.regime() == Regime::Parabolic
    }

    /// Largest chemical gradients `(max|dx c|, max|dy c|)` entering the
    /// explicit flux (dealiased, face differences in y).
    pub fn chemical_speeds(&mut self) -> (f64, f64) {
        let s = self.scales();
        (s.sx, s.sy)
    }

    fn scales(&mut self) -> FluxScales {
        self.prepare();
        self.work.pending.as_ref().map_or(FluxScales::default(), |p| p.scales)
    }

    pub fn propose_dt(&mut self, cfg: &StepConfig) -> DtChoice {
        let s = self.scales();
        choose_dt(limits(&self.grid, &self.shear, self.params.a(), s), cfg)
    }

    /// `max |n|` and `min n` on the grid.
    pub fn density_range(&mut self) -> (f64, f64) {
        let buf = &mut self.work.phys;
        self.fft.inverse_map_into(&self.n_hat, buf, |_, z| z);
        buf.iter().fold((0.0_f64, f64::INFINITY), |(m, lo), v| {
            (m.max(v.abs()), lo.min(*v))
        })
    }

    /// Evaluates the explicit terms of the current state once.
    fn prepare(&mut self) {
        if self.work.pending.is_some() {
            return;
        }
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let inv_a = 1.0 / self.params.a();
        let (mut nl_n, mut nl_c) = self
            .work
            .spare
            .take()
            .unwrap_or_else(|| (Spectrum::zeros(nx, ny), Spectrum::zeros(nx, ny)));
        let zero = Complex64::new(0.0, 0.0);
        let scales = match self.mode {
            Mode::PassiveScalar => {
                nl_n.as_mut_slice().fill(zero);
                nl_c.as_mut_slice().fill(zero);
                FluxScales::default()
            }
            Mode::Pks => {
                let scales = self
                    .work
                    .flux
                    .flux_into(&self.fft, &self.n_hat, &self.c_hat, &mut nl_n);
                for z in nl_n.as_mut_slice() {
                    *z *= -inv_a;
                }
                if self.evolves_chemical() {
                    for (o, z) in nl_c.as_mut_slice().iter_mut().zip(self.n_hat.as_slice()) {
                        *o = z * inv_a;
                    }
                } else {
                    nl_c.as_mut_slice().fill(zero);
                }
                scales
            }
        };
        self.work.pending = Some(Pending { nl_n, nl_c, scales });
    }

    fn factorizations(&mut self, dt: f64) -> Result<()> {
        let key = dt.to_bits();
        if matches!(&self.cached, Some((k, _, _)) if *k == key) {
            return Ok(());
        }
        let build = |ops: &[Tridiag]| -> Result<Vec<TridiagLu>> {
            ops.iter().map(|l| implicit_matrix(l, dt).factor()).collect()
        };
        let n_lu = build(&self.ops_n)?;
        let c_lu = build(&self.ops_c)?;
        self.cached = Some((key, n_lu, c_lu));
        Ok(())
    }

    /// Advances one step of size `dt`.
    ///
    /// With `M = I - dt/2 L_k` the Crank-Nicolson update
    /// `M x = (I + dt/2 L_k) q + dt N` is evaluated as `x = M^{-1}(2q + dt N) - q`.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PksError::Domain(format!("dt = {dt} must be positive")));
        }
        self.factorizations(dt)?;
        self.prepare();
        let Pending { nl_n, nl_c, .. } = self.work.pending.take().expect("prepared");
        let (w_now, w_old) = match &self.history {
            Some(h) => {
                let r = dt / h.dt;
                (1.0 + 0.5 * r, -0.5 * r)
            }
            None => (1.0, 0.0),
        };
        let (_, n_lu, c_lu) = self.cached.as_ref().expect("factorizations cached");
        let nyq = self.grid.nx() / 2;
        let mut rhs = vec![Complex64::new(0.0, 0.0); self.grid.ny()];

        let mut advance = |q: &mut Spectrum, nl: &Spectrum, old: Option<&Spectrum>, lus: &[TridiagLu]| {
            for (k, lu) in lus.iter().enumerate() {
                let nk = nl.slice(k);
                let s = q.slice_mut(k);
                match old {
                    Some(o) => {
                        let ok = o.slice(k);
                        for j in 0..s.len() {
                            rhs[j] = s[j] * 2.0 + (nk[j] * w_now + ok[j] * w_old) * dt;
                        }
                    }
                    None => {
                        for j in 0..s.len() {
                            rhs[j] = s[j] * 2.0 + nk[j] * (w_now * dt);
                        }
                    }
                }
                lu.solve(&mut rhs);
                for (x, r) in s.iter_mut().zip(&rhs) {
                    *x = r - *x;
                }
            }
            q.slice_mut(nyq).fill(Complex64::new(0.0, 0.0));
        };

        let old = self.history.as_ref();
        advance(&mut self.n_hat, &nl_n, old.map(|h| &h.nl_n), n_lu);
        if !c_lu.is_empty() {
            advance(&mut self.c_hat, &nl_c, old.map(|h| &h.nl_c), c_lu);
        }
        if let Some(h) = &self.helmholtz {
            self.c_hat = h.solve_spectrum(&self.n_hat);
        }
        if let Some(h) = self.history.replace(History { dt, nl_n, nl_c }) {
            self.work.spare = Some((h.nl_n, h.nl_c));
        }
        self.t += dt;
        self.steps += 1;
        Ok(())
    }

    /// Monitor record of the current state, taken from the spectra.
    pub fn record(&self, monitor: &mut Monitor, dt: f64) -> Result<MonitorRecord> {
        monitor.update_spectral(self.t, &self.n_hat, &self.c_hat, &self.density(), dt)
    }

    pub fn checkpoint(&self, config_hash: &str) -> crate::checkpoint::Checkpoint {
        crate::checkpoint::Checkpoint::capture(
            self.t,
            self.steps,
            &self.n_hat,
            &self.c_hat,
            self.history.as_ref().map(|h| (h.dt, &h.nl_n, &h.nl_c)),
            config_hash,
        )
    }

    /// Rebuilds a stepper from a checkpoint taken with the same grid and model.
    pub fn restore(
        cp: &crate::checkpoint::Checkpoint,
        grid: &Grid,
        shear: &ShearProfile,
        params: &ModelParams,
        mode: Mode,
    ) -> Result<Self> {
        let (n_hat, c_hat, hist) = cp.spectra(grid)?;
        let zero = PksState::new(cp.t, Field::zeros(*grid), Field::zeros(*grid))?;
        let mut s = Self::new(&zero, shear, params, mode)?;
        s.n_hat = n_hat;
        s.c_hat = c_hat;
        s.steps = cp.steps;
        s.history = hist.map(|(dt, nl_n, nl_c)| History { dt, nl_n, nl_c });
        Ok(s)
    }
}

/// Single step from a state without history (explicit part by forward Euler).
pub fn step(
    state: &PksState,
    shear: &ShearProfile,
    params: &ModelParams,
    dt: f64,
) -> Result<PksState> {
    let mut s = ImexStepper::new(state, shear, params, Mode::Pks)?;
    s.step(dt)?;
    let out = s.state();
    if !(out.n.is_finite() && out.c.is_finite()) {
        return Err(PksError::Data(format!("non-finite state after step at t = {}", out.t)));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BlowupDetected,
    Aborted,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::BlowupDetected => "blowup_detected",
            RunStatus::Aborted => "aborted",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub final_state: PksState,
    pub records: Vec<MonitorRecord>,
    pub steps: u64,
    /// Why the run stopped early, if it did.
    pub reason: Option<String>,
}

/// Monitor settings for [`run`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecordConfig {
    pub eps: EpsTriple,
    pub k_report: usize,
}

impl Default for RecordConfig {
    fn default() -> Self {
        Self {
            eps: EpsTriple::default(),
            k_report: 4,
        }
    }
}

/// Integrates from `init` to `cfg.t_end`, or until blow-up or failure.
pub fn run(
    init: &PksState,
    shear: &ShearProfile,
    params: &ModelParams,
    cfg: &StepConfig,
    mode: Mode,
    rec: &RecordConfig,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut stepper = ImexStepper::new(init, shear, params, mode)?;
    run_from(&mut stepper, cfg, rec, |_| Ok(()))
}

/// Drives an existing stepper to `cfg.t_end`; `on_record` sees each record as
/// it is emitted. The stepper is left at the final state.
pub fn run_from<F>(
    stepper: &mut ImexStepper,
    cfg: &StepConfig,
    rec: &RecordConfig,
    mut on_record: F,
) -> Result<RunOutcome>
where
    F: FnMut(&MonitorRecord) -> Result<()>,
{
    cfg.validate()?;
    let start = stepper.state();
    // a passive scalar is signed; only densities must stay nonnegative
    let positive = stepper.mode() == Mode::Pks;
    if positive {
        start.check_density(cfg.negativity_tol)?;
    }
    let mut monitor = Monitor::new(
        &start,
        stepper.shear(),
        stepper.params(),
        rec.eps,
        rec.k_report,
        cfg,
    )?;
    let mut records = Vec::new();
    let dt0 = stepper.propose_dt(cfg).dt.min(cfg.dt_init);
    let first = stepper.record(&mut monitor, dt0)?;
    on_record(&first)?;
    records.push(first);

    let t_end = cfg.t_end;
    let mut next_record = stepper.t() + cfg.record_interval;
    let mut status = RunStatus::Completed;
    let mut reason = None;
    let mut last_dt = 0.0;
    let eps_t = 1e-12 * t_end.max(1.0);

    while stepper.t() < t_end - eps_t {
        let mut choice = stepper.propose_dt(cfg);
        if stepper.steps() == 0 {
            choice.dt = choice.dt.min(cfg.dt_init).max(cfg.dt_min);
        }
        last_dt = choice.dt;
        if choice.underflow {
            status = RunStatus::BlowupDetected;
            reason = Some(format!(
                "time step {:.3e} fell below dt_min = {:.1e}",
                choice.raw, cfg.dt_min
            ));
            break;
        }
        let dt = choice.dt.min(t_end - stepper.t());
        stepper.step(dt)?;
        if !stepper.is_finite() {
            status = RunStatus::Aborted;
            reason = Some(format!("non-finite values at t = {:.6e}", stepper.t()));
            break;
        }
        let (n_linf, n_min) = stepper.density_range();
        if crate::monitors::grew(n_linf, monitor.initial_n_linf(), cfg.blowup_factor) {
            status = RunStatus::BlowupDetected;
            reason = Some(format!(
                "||n||_inf = {:.3e} reached {} x its initial value",
                n_linf, cfg.blowup_factor
            ));
            break;
        }
        if positive && too_negative(n_min, n_linf, cfg.negativity_tol) {
            status = RunStatus::Aborted;
            reason = Some(format!(
                "density went negative (min n = {:.3e}) at t = {:.6e}",
                n_min,
                stepper.t()
            ));
            break;
        }
        if stepper.t() >= next_record - eps_t || stepper.t() >= t_end - eps_t {
            let r = stepper.record(&mut monitor, choice.dt)?;
            on_record(&r)?;
            records.push(r);
            while next_record <= stepper.t() + eps_t {
                next_record += cfg.record_interval;
            }
        }
    }

    let final_state = stepper.state();
    if status != RunStatus::Completed && stepper.is_finite() {
        let r = stepper.record(&mut monitor, last_dt)?;
        if records.last().map(|p| p.t) != Some(r.t) {
            on_record(&r)?;
            records.push(r);
        } else if let Some(slot) = records.last_mut() {
            *slot = r;
        }
    }
    Ok(RunOutcome {
        status,
        final_state,
        records,
        steps: stepper.steps(),
        reason,
    })
}
