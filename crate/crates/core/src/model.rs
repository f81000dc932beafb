//! The shear-advected Patlak-Keller-Segel system in rescaled time:
//!
//! ```text
//! dn/dt = (1/A) Lap n - u(y) dx n - (1/A) div(n grad c)
//! dc/dt = (1/A) (Lap c + n - c) - u(y) dx c          (epsilon = 1)
//! 0     = Lap c + n - c                              (epsilon = 0)
//! ```
//!
//! x is treated pseudo-spectrally, y by second-order finite differences with a
//! no-flux closure. The aggregation term is assembled from face fluxes so that
//! its domain integral vanishes to round-off.

use num_complex::Complex64;

use crate::error::{PksError, Result};
use crate::grid::{check_same_grid, Field, Grid};
use crate::spectral::{dealias_cutoff, Spectrum, XFft};
use crate::tridiag::{Tridiag, TridiagLu};
use crate::yops;

/// Chemical relaxation regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Regime {
    /// epsilon = 0: the chemical solves `Lap c + n - c = 0` at every instant.
    Elliptic,
    /// epsilon = 1: the chemical evolves in time.
    Parabolic,
}

impl Regime {
    pub fn from_epsilon(eps: u8) -> Result<Self> {
        match eps {
            0 => Ok(Regime::Elliptic),
            1 => Ok(Regime::Parabolic),
            other => Err(PksError::Config(format!(
                "epsilon must be 0 or 1, got {other}"
            ))),
        }
    }

    pub fn epsilon(self) -> u8 {
        match self {
            Regime::Elliptic => 0,
            Regime::Parabolic => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    a: f64,
    regime: Regime,
    mass_target: Option<f64>,
}

impl ModelParams {
    pub fn new(a: f64, regime: Regime) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(PksError::Config(format!("flow amplitude A = {a} must be positive")));
        }
        Ok(Self {
            a,
            regime,
            mass_target: None,
        })
    }

    pub fn with_mass_target(mut self, mass: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(PksError::Config(format!("mass target {mass} must be positive")));
        }
        self.mass_target = Some(mass);
        Ok(self)
    }

    /// Flow amplitude; in rescaled time diffusion and aggregation carry `1/A`.
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn mass_target(&self) -> Option<f64> {
        self.mass_target
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShearKind {
    /// `u = y`.
    Couette,
    /// `u = y + a tanh(y)`, `|a| < 1`.
    TanhPerturbed { a: f64 },
    /// User-supplied samples.
    Custom,
    /// No flow at all (`A u = 0`); only valid for flowless reference runs.
    None,
}

impl ShearKind {
    pub fn name(&self) -> &'static str {
        match self {
            ShearKind::Couette => "couette",
            ShearKind::TanhPerturbed { .. } => "tanh_perturbed",
            ShearKind::Custom => "custom",
            ShearKind::None => "none",
        }
    }
}

/// Cap on `max(|u'|, |u''|, |u'''|)` applied to every profile.
pub const DEFAULT_DERIVATIVE_CAP: f64 = 1e3;

/// Shear profile `u` and its first three derivatives sampled on the y nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ShearProfile {
    kind: ShearKind,
    grid: Grid,
    u: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    u3: Vec<f64>,
}

impl ShearProfile {
    pub fn build(kind: ShearKind, grid: &Grid) -> Result<Self> {
        let y = grid.y_nodes();
        let (u, u1, u2, u3) = match kind {
            ShearKind::Couette => (
                y.clone(),
                vec![1.0; y.len()],
                vec![0.0; y.len()],
                vec![0.0; y.len()],
            ),
            ShearKind::TanhPerturbed { a } => {
                if !(a.is_finite() && a.abs() < 1.0) {
                    return Err(PksError::Config(format!(
                        "tanh_perturbed shear needs |a| < 1 for strict monotonicity, got a = {a}"
                    )));
                }
                let sech2 = |v: f64| 1.0 / v.cosh().powi(2);
                (
                    y.iter().map(|&v| v + a * v.tanh()).collect(),
                    y.iter().map(|&v| 1.0 + a * sech2(v)).collect(),
                    y.iter().map(|&v| -2.0 * a * sech2(v) * v.tanh()).collect(),
                    y.iter()
                        .map(|&v| -2.0 * a * sech2(v) * (sech2(v) - 2.0 * v.tanh().powi(2)))
                        .collect(),
                )
            }
            ShearKind::None => {
                let z = vec![0.0; y.len()];
                (z.clone(), z.clone(), z.clone(), z)
            }
            ShearKind::Custom => {
                return Err(PksError::Misuse(
                    "custom shear profiles are built with ShearProfile::custom".into(),
                ))
            }
        };
        let profile = Self {
            kind,
            grid: *grid,
            u,
            u1,
            u2,
            u3,
        };
        profile.validate(DEFAULT_DERIVATIVE_CAP)?;
        Ok(profile)
    }

    pub fn couette(grid: &Grid) -> Self {
        Self::build(ShearKind::Couette, grid).expect("couette is always valid")
    }

    pub fn none(grid: &Grid) -> Self {
        Self::build(ShearKind::None, grid).expect("zero flow is always valid")
    }

    /// Custom samples; rejected unless `min u' > 0` and derivatives stay below `cap`.
    pub fn custom(
        grid: &Grid,
        u: Vec<f64>,
        u1: Vec<f64>,
        u2: Vec<f64>,
        u3: Vec<f64>,
        cap: f64,
    ) -> Result<Self> {
        for (name, v) in [("u", &u), ("u'", &u1), ("u''", &u2), ("u'''", &u3)] {
            if v.len() != grid.ny() {
                return Err(PksError::Dimension(format!(
                    "{name} has {} samples, grid has ny = {}",
                    v.len(),
                    grid.ny()
                )));
            }
        }
        let profile = Self {
            kind: ShearKind::Custom,
            grid: *grid,
            u,
            u1,
            u2,
            u3,
        };
        profile.validate(cap)?;
        Ok(profile)
    }

    /// `s u`. Zero gives the no-flow profile; any other positive factor a
    /// custom profile subject to the usual checks.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(PksError::Config(format!(
                "shear amplitude {s} must be finite and non-negative"
            )));
        }
        if s == 0.0 {
            return Ok(Self::none(&self.grid));
        }
        if s == 1.0 || self.kind == ShearKind::None {
            return Ok(self.clone());
        }
        let scale = |v: &[f64]| v.iter().map(|x| s * x).collect::<Vec<_>>();
        Self::custom(
            &self.grid,
            scale(&self.u),
            scale(&self.u1),
            scale(&self.u2),
            scale(&self.u3),
            DEFAULT_DERIVATIVE_CAP,
        )
    }

    fn validate(&self, cap: f64) -> Result<()> {
        let all = [&self.u, &self.u1, &self.u2, &self.u3];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(PksError::Data("shear profile is not finite".into()));
        }
        if self.kind != ShearKind::None {
            let min_u1 = self.u1.iter().copied().fold(f64::INFINITY, f64::min);
            if !(min_u1 > 0.0) {
                return Err(PksError::Config(format!(
                    "shear '{}' is not strictly increasing (min u' = {min_u1:.3e}); \
                     decreasing profiles are rejected rather than flipped",
                    self.kind.name()
                )));
            }
        }
        let w = [&self.u1, &self.u2, &self.u3]
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()));
        if w > cap {
            return Err(PksError::Config(format!(
                "shear derivative bound {w:.3e} exceeds cap {cap:.3e}"
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> ShearKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn u1(&self) -> &[f64] {
        &self.u1
    }

    pub fn u2(&self) -> &[f64] {
        &self.u2
    }

    pub fn u3(&self) -> &[f64] {
        &self.u3
    }

    pub fn max_abs_u(&self) -> f64 {
        self.u.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_flowing(&self) -> bool {
        self.kind != ShearKind::None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PksState {
    pub t: f64,
    pub n: Field,
    pub c: Field,
}

/// Default tolerance for negative density, relative to `max |n|`.
pub const NEGATIVITY_TOL: f64 = 1e-2;

/// `min n < -tol max|n|`.
pub fn too_negative(n_min: f64, n_linf: f64, tol: f64) -> bool {
    n_min < -tol * n_linf
}

impl PksState {
    pub fn new(t: f64, n: Field, c: Field) -> Result<Self> {
        check_same_grid(&n, &c)?;
        if !(n.is_finite() && c.is_finite()) {
            return Err(PksError::Data("state contains non-finite values".into()));
        }
        Ok(Self { t, n, c })
    }

    pub fn grid(&self) -> &Grid {
        self.n.grid()
    }

    /// Fails when `min n < -tol max|n|`.
    pub fn check_density(&self, tol: f64) -> Result<()> {
        let m = self.n.min();
        if too_negative(m, self.n.max_abs(), tol) {
            return Err(PksError::Data(format!(
                "density went negative (min n = {m:.3e}, relative tolerance {tol:.1e})"
            )));
        }
        Ok(())
    }
}

/// `lhs = coef * D2_neumann + diag(shift_j)` as a tridiagonal matrix.
pub(crate) fn neumann_operator(
    ny: usize,
    dy: f64,
    coef: f64,
    shift: impl Fn(usize) -> Complex64,
) -> Tridiag {
    let h = coef / (dy * dy);
    let z = Complex64::new(0.0, 0.0);
    let mut lower = vec![Complex64::new(h, 0.0); ny];
    let mut upper = vec![Complex64::new(h, 0.0); ny];
    let diag: Vec<Complex64> = (0..ny).map(|j| Complex64::new(-2.0 * h, 0.0) + shift(j)).collect();
    lower[0] = z;
    upper[0] = Complex64::new(2.0 * h, 0.0);
    lower[ny - 1] = Complex64::new(2.0 * h, 0.0);
    upper[ny - 1] = z;
    Tridiag { lower, diag, upper }
}

/// Linear part for wavenumber `k`:
/// `L_k q = (1/A)(D2 q - (k^2 + damping) q) - i k u q`.
pub fn linear_operator_k(
    k: i64,
    damping: f64,
    params: &ModelParams,
    shear: &ShearProfile,
) -> Tridiag {
    let grid = shear.grid();
    let inv_a = 1.0 / params.a;
    let kf = k as f64;
    let u = shear.u();
    neumann_operator(grid.ny(), grid.dy(), inv_a, |j| {
        Complex64::new(-inv_a * (kf * kf + damping), -kf * u[j])
    })
}

/// Pseudo-spectral aggregation term `div(n grad c)` on half spectra.
///
/// Inputs are truncated to `|k| <= nx/3` before products are formed and the
/// result is truncated again (2/3 rule). Contributions are assembled per
/// zero/nonzero mode pair so that round-off in the x-dependent output scales
/// with the x-dependent input rather than with the zero modes.
pub(crate) fn flux_spectrum(
    fft: &XFft,
    grid: &Grid,
    n_hat: &Spectrum,
    c_hat: &Spectrum,
) -> Spectrum {
    let mut work = FluxWork::new(grid);
    let mut out = Spectrum::zeros(grid.nx(), grid.ny());
    work.flux_into(fft, n_hat, c_hat, &mut out);
    out
}

/// Scratch buffers for repeated flux evaluations on one grid.
#[derive(Clone, Debug)]
pub(crate) struct FluxWork {
    nx: usize,
    ny: usize,
    dy: f64,
    pn: Vec<f64>,
    pc: Vec<f64>,
    dxc: Vec<f64>,
    q: Vec<f64>,
    face: Vec<f64>,
    g: Vec<f64>,
    q_hat: Spectrum,
    g_hat: Spectrum,
}

impl FluxWork {
    pub(crate) fn new(grid: &Grid) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        Self {
            nx,
            ny,
            dy: grid.dy(),
            pn: vec![0.0; nx * ny],
            pc: vec![0.0; nx * ny],
            dxc: vec![0.0; nx * ny],
            q: vec![0.0; nx * ny],
            face: vec![0.0; nx * (ny - 1)],
            g: vec![0.0; nx * ny],
            q_hat: Spectrum::zeros(nx, ny),
            g_hat: Spectrum::zeros(nx, ny),
        }
    }

    /// Writes the spectrum of `div(n grad c)` into `out` and returns the sizes
    /// of the quantities that entered it.
    pub(crate) fn flux_into(
        &mut self,
        fft: &XFft,
        n_hat: &Spectrum,
        c_hat: &Spectrum,
        out: &mut Spectrum,
    ) -> FluxScales {
        let (nx, ny, dy) = (self.nx, self.ny, self.dy);
        let kmax = dealias_cutoff(nx);
        let n0 = n_hat.zero_mode();
        let c0 = c_hat.zero_mode();

        // zero-mode by zero-mode part, exact 1D arithmetic
        let face0: Vec<f64> = (0..ny - 1)
            .map(|j| 0.5 * (n0[j] + n0[j + 1]) * (c0[j + 1] - c0[j]) / dy)
            .collect();
        let mut div0 = vec![0.0; ny];
        yops::face_divergence(&face0, dy, &mut div0);
        let mut sx = 0.0_f64;
        let mut sy = (0..ny - 1).fold(0.0_f64, |m, j| m.max(((c0[j + 1] - c0[j]) / dy).abs()));
        let mut n_max = n0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

        out.as_mut_slice().fill(Complex64::new(0.0, 0.0));
        if kmax >= 1 {
            let keep = |k: usize, z: Complex64| {
                if (1..=kmax).contains(&k) {
                    z
                } else {
                    Complex64::new(0.0, 0.0)
                }
            };
            fft.inverse_map_into(n_hat, &mut self.pn, keep);
            fft.inverse_map_into(c_hat, &mut self.pc, keep);
            fft.inverse_map_into(c_hat, &mut self.dxc, |k, z| {
                keep(k, z) * Complex64::new(0.0, k as f64)
            });

            for j in 0..ny {
                let row = j * nx..(j + 1) * nx;
                for ((q, n), d) in self.q[row.clone()]
                    .iter_mut()
                    .zip(&self.pn[row.clone()])
                    .zip(&self.dxc[row])
                {
                    *q = (n0[j] + n) * d;
                    sx = sx.max(d.abs());
                    n_max = n_max.max((n0[j] + n).abs());
                }
            }

            for j in 0..ny - 1 {
                let nbar0 = 0.5 * (n0[j] + n0[j + 1]);
                let dc0 = (c0[j + 1] - c0[j]) / dy;
                let (a, b) = (j * nx, (j + 1) * nx);
                for i in 0..nx {
                    let nbar = 0.5 * (self.pn[a + i] + self.pn[b + i]);
                    let dc = (self.pc[b + i] - self.pc[a + i]) / dy;
                    sy = sy.max((dc0 + dc).abs());
                    self.face[a + i] = nbar0 * dc + nbar * dc0 + nbar * dc;
                }
            }
            let h = 1.0 / dy;
            for i in 0..nx {
                self.g[i] = self.face[i] * (2.0 * h);
                self.g[(ny - 1) * nx + i] = (self.face[(ny - 2) * nx + i] * -1.0) * (2.0 * h);
            }
            for j in 1..ny - 1 {
                for i in 0..nx {
                    self.g[j * nx + i] = (self.face[j * nx + i] - self.face[(j - 1) * nx + i]) * h;
                }
            }

            fft.forward_into(&self.q, &mut self.q_hat);
            fft.forward_into(&self.g, &mut self.g_hat);
            for k in 0..=kmax.min(nx / 2) {
                let ik = Complex64::new(0.0, k as f64);
                let qs = self.q_hat.slice(k);
                let gs = self.g_hat.slice(k);
                let os = out.slice_mut(k);
                for j in 0..ny {
                    os[j] = if k == 0 { gs[j] } else { ik * qs[j] + gs[j] };
                }
            }
        }
        for (z, d) in out.slice_mut(0).iter_mut().zip(&div0) {
            z.re += d;
            z.im = 0.0;
        }
        FluxScales { sx, sy, n_max }
    }
}

/// Sizes seen by one flux evaluation: `max|dx c|` (dealiased), `max|dy c|`
/// (on faces) and `max|n|` (dealiased).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct FluxScales {
    pub sx: f64,
    pub sy: f64,
    pub n_max: f64,
}

/// `div(n grad c)` with 2/3-rule dealiasing in x and no-flux walls in y.
pub fn chemotaxis_flux(n: &Field, c: &Field) -> Result<Field> {
    check_same_grid(n, c)?;
    if !(n.is_finite() && c.is_finite()) {
        return Err(PksError::Data("chemotaxis flux of non-finite fields".into()));
    }
    let grid = *n.grid();
    let fft = grid.fft();
    let n_hat = fft.forward(n.values(), grid.ny());
    let c_hat = fft.forward(c.values(), grid.ny());
    let out = flux_spectrum(&fft, &grid, &n_hat, &c_hat);
    Ok(Field::from_raw(grid, fft.inverse(&out)))
}

/// Right-hand sides `(dn/dt, dc/dt)` of the parabolic-parabolic system.
pub fn assemble_rhs(
    state: &PksState,
    shear: &ShearProfile,
    params: &ModelParams,
) -> Result<(Field, Field)> {
    if params.regime == Regime::Elliptic {
        return Err(PksError::Misuse(
            "epsilon = 0 has no chemical time derivative; use chem_elliptic_solve".into(),
        ));
    }
    check_same_grid(&state.n, &state.c)?;
    let grid = *state.grid();
    if shear.grid() != &grid {
        return Err(PksError::Dimension("shear profile built for another grid".into()));
    }
    if !(state.n.is_finite() && state.c.is_finite()) {
        return Err(PksError::Data("state contains non-finite values".into()));
    }
    let fft = grid.fft();
    let ny = grid.ny();
    let n_hat = fft.forward(state.n.values(), ny);
    let c_hat = fft.forward(state.c.values(), ny);
    let flux = flux_spectrum(&fft, &grid, &n_hat, &c_hat);
    let inv_a = 1.0 / params.a;
    let nyq = grid.nx() / 2;

    let mut dn = Spectrum::zeros(grid.nx(), ny);
    let mut dc = Spectrum::zeros(grid.nx(), ny);
    for k in 0..=nyq {
        // the Nyquist mode carries no advection (its x-derivative is dropped)
        let adv = if k == nyq { 0 } else { k as i64 };
        let ln = linear_operator_k(adv, 0.0, params, shear);
        let lc = linear_operator_k(adv, 1.0, params, shear);
        let kk = (k * k) as f64 - (adv * adv) as f64;
        let an = ln.apply(n_hat.slice(k));
        let ac = lc.apply(c_hat.slice(k));
        let nk = n_hat.slice(k);
        let ck = c_hat.slice(k);
        let fk = flux.slice(k);
        let dns = dn.slice_mut(k);
        for j in 0..ny {
            dns[j] = an[j] - nk[j] * (inv_a * kk) - fk[j] * inv_a;
        }
        let dcs = dc.slice_mut(k);
        for j in 0..ny {
            dcs[j] = ac[j] - ck[j] * (inv_a * kk) + nk[j] * inv_a;
        }
    }
    Ok((
        Field::from_raw(grid, fft.inverse(&dn)),
        Field::from_raw(grid, fft.inverse(&dc)),
    ))
}

/// Per-wavenumber factorizations of `D2 - k^2 - 1`.
#[derive(Clone, Debug)]
pub struct HelmholtzSolver {
    grid: Grid,
    lus: Vec<TridiagLu>,
}

impl HelmholtzSolver {
    pub fn new(grid: &Grid) -> Result<Self> {
        let lus = (0..=grid.nx() / 2)
            .map(|k| {
                let kk = (k * k) as f64;
                neumann_operator(grid.ny(), grid.dy(), 1.0, |_| {
                    Complex64::new(-(kk + 1.0), 0.0)
                })
                .factor()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: *grid, lus })
    }

    /// Chemical spectrum solving `(D2 - k^2 - 1) c_k = -n_k` for every stored k.
    pub fn solve_spectrum(&self, n_hat: &Spectrum) -> Spectrum {
        let mut out = n_hat.clone();
        for (k, lu) in self.lus.iter().enumerate() {
            let s = out.slice_mut(k);
            for z in s.iter_mut() {
                *z = -*z;
            }
            lu.solve(s);
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

/// Solves `Lap c + n - c = 0` with no-flux walls.
pub fn chem_elliptic_solve(n: &Field) -> Result<Field> {
    if !n.is_finite() {
        return Err(PksError::Data("density contains non-finite values".into()));
    }
    let grid = *n.grid();
    let fft = grid.fft();
    let solver = HelmholtzSolver::new(&grid)?;
    let c_hat = solver.solve_spectrum(&fft.forward(n.values(), grid.ny()));
    Ok(Field::from_raw(grid, fft.inverse(&c_hat)))
}
