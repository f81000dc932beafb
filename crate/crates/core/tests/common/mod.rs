//! References shared by the oracle tests and the acceptance suite.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use pks::grid::{mode_split, Field, Grid, SpectralSlice};
use pks::hypo::{multipliers, phi_k, EpsTriple, Multipliers};
use pks::integrator::{ImexStepper, Mode};
use pks::model::{chem_elliptic_solve, ModelParams, PksState, Regime, ShearKind, ShearProfile};
use pks::yops;

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Neumann second difference as a dense matrix (ghost reflection at the walls).
pub fn d2_matrix(ny: usize, dy: f64) -> DMatrix<f64> {
    let h = 1.0 / (dy * dy);
    let mut m = DMatrix::zeros(ny, ny);
    for j in 0..ny {
        m[(j, j)] = -2.0 * h;
        if j > 0 {
            m[(j, j - 1)] = h;
        }
        if j + 1 < ny {
            m[(j, j + 1)] = h;
        }
    }
    m[(0, 1)] = 2.0 * h;
    m[(ny - 1, ny - 2)] = 2.0 * h;
    m
}

/// Conservative face-flux divergence of `n_bar dc/dy`, computed node by node.
pub fn y_flux_divergence(n: &[f64], c: &[f64], dy: f64) -> Vec<f64> {
    let ny = n.len();
    let face: Vec<f64> = (0..ny - 1)
        .map(|j| 0.5 * (n[j] + n[j + 1]) * (c[j + 1] - c[j]) / dy)
        .collect();
    (0..ny)
        .map(|j| {
            if j == 0 {
                2.0 * face[0] / dy
            } else if j == ny - 1 {
                -2.0 * face[ny - 2] / dy
            } else {
                (face[j] - face[j - 1]) / dy
            }
        })
        .collect()
}

/// Fixed-step CN/AB2 on the y-line with dense linear algebra.
pub fn zero_mode_reference(
    n: &[f64],
    c: &[f64],
    a: f64,
    dy: f64,
    dt: f64,
    steps: usize,
) -> (DVector<f64>, DVector<f64>) {
    let ny = n.len();
    let eye = DMatrix::<f64>::identity(ny, ny);
    let d2 = d2_matrix(ny, dy);
    let ln = &d2 / a;
    let lc = (&d2 - &eye) / a;
    let lu_n = (&eye - &ln * (0.5 * dt)).lu();
    let lu_c = (&eye - &lc * (0.5 * dt)).lu();
    let ex_n = &eye + &ln * (0.5 * dt);
    let ex_c = &eye + &lc * (0.5 * dt);
    let mut n = DVector::from_column_slice(n);
    let mut c = DVector::from_column_slice(c);
    let explicit = |n: &DVector<f64>, c: &DVector<f64>| {
        let div = y_flux_divergence(n.as_slice(), c.as_slice(), dy);
        (DVector::from_vec(div) * (-1.0 / a), n / a)
    };
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    for _ in 0..steps {
        let (fn_now, fc_now) = explicit(&n, &c);
        let (fn_ab, fc_ab) = match &prev {
            Some((fn_old, fc_old)) => (&fn_now * 1.5 - fn_old * 0.5, &fc_now * 1.5 - fc_old * 0.5),
            None => (fn_now.clone(), fc_now.clone()),
        };
        let n_new = lu_n.solve(&(&ex_n * &n + fn_ab * dt)).unwrap();
        let c_new = lu_c.solve(&(&ex_c * &c + fc_ab * dt)).unwrap();
        n = n_new;
        c = c_new;
        prev = Some((fn_now, fc_now));
    }
    (n, c)
}

pub fn elliptic_error(ny: usize) -> f64 {
    let ly = 4.0;
    let g = Grid::new(8, ny, ly).unwrap();
    let s = |y: f64| (y + ly) / ly;
    let q1 = (PI / ly).powi(2);
    let q2 = (2.0 * PI / ly).powi(2);
    let exact = |x: f64, y: f64| (PI * s(y)).cos() + 0.5 * x.cos() * (2.0 * PI * s(y)).cos();
    // n = -Lap c + c
    let n = Field::from_fn(g, |x, y| {
        (1.0 + q1) * (PI * s(y)).cos() + 0.5 * x.cos() * (2.0 * PI * s(y)).cos() * (2.0 + q2)
    });
    let c = chem_elliptic_solve(&n).unwrap();
    let want = Field::from_fn(g, exact);
    max_abs(c.values().iter().zip(want.values()).map(|(p, q)| p - q))
}

pub fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect()
}

/// Phi_k with dense matrices and the analytic shear derivative.
pub fn phi_reference(
    k: i64,
    f: &[Complex64],
    tanh_a: f64,
    g: &Grid,
    m: &Multipliers,
) -> f64 {
    let ny = g.ny();
    let dy = g.dy();
    let mut d1 = DMatrix::<Complex64>::zeros(ny, ny);
    let h = Complex64::new(0.5 / dy, 0.0);
    for j in 1..ny - 1 {
        d1[(j, j - 1)] = -h;
        d1[(j, j + 1)] = h;
    }
    d1[(0, 0)] = -h * 3.0;
    d1[(0, 1)] = h * 4.0;
    d1[(0, 2)] = -h;
    d1[(ny - 1, ny - 1)] = h * 3.0;
    d1[(ny - 1, ny - 2)] = -h * 4.0;
    d1[(ny - 1, ny - 3)] = h;
    let w = DMatrix::from_diagonal(&DVector::from_fn(ny, |j, _| {
        let end = j == 0 || j == ny - 1;
        Complex64::new(if end { 0.5 * dy } else { dy }, 0.0)
    }));
    let up = DMatrix::from_diagonal(&DVector::from_fn(ny, |j, _| {
        let y = g.y(j);
        Complex64::new(1.0 + tanh_a / y.cosh().powi(2), 0.0)
    }));
    let f = DVector::from_column_slice(f);
    let fp = &d1 * &f;
    // <a, b> = sum_j w_j a_j conj(b_j)
    let ip = |a: &DVector<Complex64>, b: &DVector<Complex64>| b.dotc(&(&w * a));
    let i = Complex64::i();
    let uf = &up * &f;
    let kf = k as f64;
    let total = ip(&f, &f).re
        + m.alpha * ip(&fp, &fp).re
        + 2.0 * kf * m.beta * ip(&(&uf * i), &fp).re
        + kf * kf * m.gamma * ip(&uf, &uf).re;
    2.0 * PI * total
}

pub fn complex_profile(ny: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), ny)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

/// Runs x-independent data through the 2D stepper and the 1D reference;
/// returns the relative L2 discrepancies of `(n, c)` and the largest x-dependent value.
pub fn zero_mode_discrepancy() -> (f64, f64, f64) {
    let g = Grid::new(16, 65, 4.0).unwrap();
    let a = 3.0;
    let n_prof: Vec<f64> = g.y_nodes().iter().map(|y| 1.0 + 2.0 * (-y * y).exp()).collect();
    let c_prof: Vec<f64> = g.y_nodes().iter().map(|y| 0.5 * (-(y - 0.5).powi(2)).exp()).collect();
    let state = PksState::new(
        0.0,
        Field::from_profile(g, &n_prof).unwrap(),
        Field::from_profile(g, &c_prof).unwrap(),
    )
    .unwrap();
    let shear = ShearProfile::couette(&g);
    let params = ModelParams::new(a, Regime::Parabolic).unwrap();
    let mut s = ImexStepper::new(&state, &shear, &params, Mode::Pks).unwrap();
    let (dt, steps) = (0.02, 250);
    for _ in 0..steps {
        s.step(dt).unwrap();
    }
    let (rn, rc) = zero_mode_reference(&n_prof, &c_prof, a, g.dy(), dt, steps);
    let mut rel = [0.0; 2];
    let mut leak = 0.0_f64;
    for (i, (field, reference)) in [(s.density(), rn), (s.chemical(), rc)].into_iter().enumerate() {
        let (zero, rest) = mode_split(&field);
        leak = leak.max(max_abs(rest.values().iter().copied()));
        let diff: Vec<f64> = zero.iter().zip(reference.iter()).map(|(p, q)| p - q).collect();
        rel[i] = yops::profile_lp(&diff, g.dy(), 2.0)
            / yops::profile_lp(reference.as_slice(), g.dy(), 2.0);
    }
    (rel[0], rel[1], leak)
}

/// Observed orders of the elliptic solve on `ny = 33, 65, 129, 257`.
pub fn elliptic_orders() -> Vec<f64> {
    let errs: Vec<f64> = [33, 65, 129, 257].iter().map(|&ny| elliptic_error(ny)).collect();
    orders(&errs)
}

/// `(library, reference)` values of `Phi_k` on a tanh-perturbed shear.
pub fn phi_pair(k: i64, f: &[Complex64], a: f64) -> (f64, f64) {
    let g = Grid::new(32, 41, 3.0).unwrap();
    let tanh_a = 0.3;
    let shear = ShearProfile::build(ShearKind::TanhPerturbed { a: tanh_a }, &g).unwrap();
    let m = multipliers(a, k, &EpsTriple::default()).unwrap();
    let got = phi_k(&SpectralSlice::new(k, f.to_vec()), &shear, &m).unwrap();
    (got, phi_reference(k, f, tanh_a, &g, &m))
}

/// `(eps_alpha, eps_beta, eps_gamma)` with `8 eps_beta^2 <= eps_alpha eps_gamma`.
pub fn admissible_eps() -> impl Strategy<Value = EpsTriple> {
    (-4.0f64..0.0, -4.0f64..0.0, 0.0f64..=1.0).prop_map(|(la, lg, s)| {
        let alpha = 10f64.powf(la);
        let gamma = 10f64.powf(lg);
        // sqrt(alpha gamma / 8) would sit exactly on the constraint; stay a hair inside
        let beta = (s * (alpha * gamma / 8.0).sqrt() * (1.0 - 1e-12)).max(f64::MIN_POSITIVE);
        EpsTriple { alpha, beta, gamma }
    })
}

/// Input for the `Phi_k >= ||f||^2 / 2` property.
#[derive(Clone, Debug)]
pub struct PhiCase {
    pub eps: EpsTriple,
    pub a: f64,
    pub k: i64,
    pub tanh_a: f64,
    pub f: Vec<Complex64>,
}

pub fn phi_case() -> impl Strategy<Value = PhiCase> {
    (
        admissible_eps(),
        0.0f64..6.0,
        1i64..=32,
        -0.9f64..0.9,
        0.0f64..40.0,
        complex_profile(33),
    )
        .prop_map(|(eps, log_a, k, tanh_a, osc, f)| {
            let g = Grid::new(64, 33, 4.0).unwrap();
            // a rapidly rotating phase makes the cross term as large as it gets
            let f = f
                .iter()
                .zip(g.y_nodes())
                .map(|(z, y)| z * Complex64::from_polar(1.0, osc * y))
                .collect();
            PhiCase { eps, a: 10f64.powf(log_a), k, tanh_a, f }
        })
}

/// `(Phi_k, ||f||^2)` for one case.
pub fn phi_and_l2(c: &PhiCase) -> (f64, f64) {
    let g = Grid::new(64, 33, 4.0).unwrap();
    let shear = ShearProfile::build(ShearKind::TanhPerturbed { a: c.tanh_a }, &g).unwrap();
    let m = multipliers(c.a, c.k, &c.eps).unwrap();
    let t = pks::hypo::phi_k_terms(&SpectralSlice::new(c.k, c.f.clone()), &shear, &m).unwrap();
    (t.total(), t.l2)
}

