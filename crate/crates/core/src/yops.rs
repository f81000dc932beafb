//! One-dimensional operators on y-profiles.
//!
//! Nodes are uniform on `[-Ly, Ly]` and include both endpoints. Quadrature is
//! the trapezoid rule; the second derivative uses ghost-point reflection at the
//! endpoints (homogeneous Neumann closure), which makes `sum_j w_j (D2 f)_j = 0`
//! exactly for the trapezoid weights `w`.

use std::ops::{Add, Mul, Sub};

/// Scalars the finite-difference kernels can act on (real or complex profiles).
pub trait YScalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}

impl<T> YScalar for T where T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> {}

pub fn trapz_weights(ny: usize, dy: f64) -> Vec<f64> {
    let mut w = vec![dy; ny];
    if ny > 0 {
        w[0] = 0.5 * dy;
        w[ny - 1] = 0.5 * dy;
    }
    w
}

pub fn trapz(f: &[f64], dy: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = f[1..n - 1].iter().sum();
    dy * (inner + 0.5 * (f[0] + f[n - 1]))
}

/// First derivative: central differences inside, second-order one-sided
/// stencils at both ends. Requires at least three nodes.
pub fn d1<T: YScalar>(f: &[T], dy: f64) -> Vec<T> {
    let n = f.len();
    debug_assert!(n >= 3);
    let h = 0.5 / dy;
    let mut out = Vec::with_capacity(n);
    out.push((f[1] * 4.0 - f[0] * 3.0 - f[2]) * h);
    for j in 1..n - 1 {
        out.push((f[j + 1] - f[j - 1]) * h);
    }
    out.push((f[n - 1] * 3.0 - f[n - 2] * 4.0 + f[n - 3]) * h);
    out
}

/// Second derivative with the no-flux closure (ghost value mirrors the first
/// interior node).
pub fn d2_neumann<T: YScalar>(f: &[T], dy: f64) -> Vec<T> {
    let n = f.len();
    debug_assert!(n >= 3);
    let h = 1.0 / (dy * dy);
    let mut out = Vec::with_capacity(n);
    out.push((f[1] - f[0]) * (2.0 * h));
    for j in 1..n - 1 {
        out.push((f[j + 1] + f[j - 1] - f[j] * 2.0) * h);
    }
    out.push((f[n - 2] - f[n - 1]) * (2.0 * h));
    out
}

/// Conservative divergence of the face fluxes `flux[j] ~ F(y_{j+1/2})` with
/// zero flux through both walls. `flux.len() == n - 1`.
pub fn face_divergence<T: YScalar>(flux: &[T], dy: f64, out: &mut [T]) {
    let n = out.len();
    debug_assert_eq!(flux.len() + 1, n);
    let h = 1.0 / dy;
    out[0] = flux[0] * (2.0 * h);
    for j in 1..n - 1 {
        out[j] = (flux[j] - flux[j - 1]) * h;
    }
    out[n - 1] = (flux[n - 2] * -1.0) * (2.0 * h);
}

/// `sum over faces of dy * ((f_{j+1} - f_j)/dy)^2`, the Dirichlet form of the
/// Neumann second difference.
pub fn face_gradient_sq(f: &[f64], dy: f64) -> f64 {
    f.windows(2)
        .map(|w| {
            let g = (w[1] - w[0]) / dy;
            g * g
        })
        .sum::<f64>()
        * dy
}

pub fn profile_lp(f: &[f64], dy: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    }
    let g: Vec<f64> = f.iter().map(|v| v.abs().powf(p)).collect();
    trapz(&g, dy).powf(1.0 / p)
}
