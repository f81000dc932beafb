//! Hypocoercivity diagnostics: the `(alpha, beta, gamma)` multipliers, the
//! per-wavenumber functional `Phi_k`, the composite functional `F` of the
//! coupled system, and exponential-rate fitting.
//!
//! Slice inner products carry the x-period as a weight,
//! `<f, g> = 2 pi sum_j w_j f_j conj(g_j)` with trapezoid weights `w`, so that
//! summing `|f_hat_k|^2` over all wavenumbers reproduces the domain `L^2` norm.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PksError, Result};
use crate::grid::{SpectralSlice, TWO_PI};
use crate::model::{ModelParams, PksState, ShearProfile};
use crate::spectral::Spectrum;
use crate::yops;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsTriple {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for EpsTriple {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: 0.003,
            gamma: 0.01,
        }
    }
}

impl EpsTriple {
    /// Positivity of all three and `8 eps_beta^2 <= eps_alpha eps_gamma`.
    pub fn validate(&self) -> Result<()> {
        let Self { alpha, beta, gamma } = *self;
        if !(alpha > 0.0 && beta > 0.0 && gamma > 0.0)
            || !(alpha.is_finite() && beta.is_finite() && gamma.is_finite())
        {
            return Err(PksError::Config(format!(
                "multiplier constants must be positive, got ({alpha}, {beta}, {gamma})"
            )));
        }
        if 8.0 * beta * beta > alpha * gamma {
            return Err(PksError::Config(format!(
                "8 eps_beta^2 = {:.3e} exceeds eps_alpha eps_gamma = {:.3e}",
                8.0 * beta * beta,
                alpha * gamma
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Multipliers {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// `alpha = ea A^{-2/3}|k|^{-2/3}`, `beta = eb A^{-1/3}|k|^{-4/3}`, `gamma = eg |k|^{-2}`.
pub fn multipliers(a: f64, k: i64, eps: &EpsTriple) -> Result<Multipliers> {
    if k == 0 {
        return Err(PksError::Domain("multipliers are undefined for k = 0".into()));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(PksError::Domain(format!("A = {a} must be positive")));
    }
    eps.validate()?;
    let kf = k.unsigned_abs() as f64;
    let m = Multipliers {
        alpha: eps.alpha * a.powf(-2.0 / 3.0) * kf.powf(-2.0 / 3.0),
        beta: eps.beta * a.powf(-1.0 / 3.0) * kf.powf(-4.0 / 3.0),
        gamma: eps.gamma * kf.powi(-2),
    };
    // implied by the eps check up to rounding
    debug_assert!(8.0 * m.beta * m.beta <= m.alpha * m.gamma * (1.0 + 1e-12));
    Ok(m)
}

/// The four terms of `Phi_k`, already weighted by their multipliers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiTerms {
    pub l2: f64,
    pub alpha: f64,
    pub cross: f64,
    pub gamma: f64,
}

impl PhiTerms {
    pub fn total(&self) -> f64 {
        self.l2 + self.alpha + self.cross + self.gamma
    }

    /// The diagonal part `||f||^2 + alpha||f'||^2 + k^2 gamma ||u' f||^2`.
    pub fn diagonal(&self) -> f64 {
        self.l2 + self.alpha + self.gamma
    }
}

pub(crate) fn phi_terms_raw(
    k: i64,
    profile: &[Complex64],
    u1: &[f64],
    weights: &[f64],
    dy: f64,
    m: &Multipliers,
) -> PhiTerms {
    let d = yops::d1(profile, dy);
    let kf = k as f64;
    let mut l2 = 0.0;
    let mut grad = 0.0;
    let mut cross = 0.0;
    let mut shear = 0.0;
    for j in 0..profile.len() {
        let f = profile[j];
        let w = weights[j];
        l2 += w * f.norm_sqr();
        grad += w * d[j].norm_sqr();
        // Re(i u' f conj(f'))
        cross += w * u1[j] * (Complex64::i() * f * d[j].conj()).re;
        shear += w * u1[j] * u1[j] * f.norm_sqr();
    }
    PhiTerms {
        l2: TWO_PI * l2,
        alpha: TWO_PI * m.alpha * grad,
        cross: TWO_PI * 2.0 * kf * m.beta * cross,
        gamma: TWO_PI * kf * kf * m.gamma * shear,
    }
}

pub fn phi_k_terms(slice: &SpectralSlice, shear: &ShearProfile, m: &Multipliers) -> Result<PhiTerms> {
    if slice.k == 0 {
        return Err(PksError::Domain("Phi_k is defined for k != 0 only".into()));
    }
    let grid = shear.grid();
    if slice.profile.len() != grid.ny() {
        return Err(PksError::Dimension(format!(
            "slice has {} values, shear grid has ny = {}",
            slice.profile.len(),
            grid.ny()
        )));
    }
    if slice.profile.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(PksError::Data("slice is not finite".into()));
    }
    Ok(phi_terms_raw(
        slice.k,
        &slice.profile,
        shear.u1(),
        &grid.y_weights(),
        grid.dy(),
        m,
    ))
}

/// `Phi_k[f] = ||f||^2 + ||sqrt(alpha) f'||^2 + 2k Re<i beta u' f, f'> + k^2 ||sqrt(gamma) u' f||^2`.
pub fn phi_k(slice: &SpectralSlice, shear: &ShearProfile, m: &Multipliers) -> Result<f64> {
    Ok(phi_k_terms(slice, shear, m)?.total())
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FComponents {
    /// `sum_k Phi_k[n]`
    pub n: f64,
    /// `sum_k Phi_k[dy c]`
    pub dyc: f64,
    /// `sum_k Phi_k[dx c]`
    pub dxc: f64,
    /// `sum_k A|k| Phi_k[c]`
    pub akc: f64,
}

impl FComponents {
    pub fn total(&self) -> f64 {
        self.n + self.dyc + self.dxc + self.akc
    }

    fn add_scaled(&mut self, o: &FComponents, s: f64) {
        self.n += s * o.n;
        self.dyc += s * o.dyc;
        self.dxc += s * o.dxc;
        self.akc += s * o.akc;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FBreakdown {
    pub total: f64,
    pub components: FComponents,
    /// `(k, F_k)` for `k = 1..=nx/2`; `F_{-k} = F_k` for real fields.
    pub per_k: Vec<(i64, FComponents)>,
}

/// Composite functional from the half spectra of `n` and `c`.
pub(crate) fn functional_f_spectral(
    n_hat: &Spectrum,
    c_hat: &Spectrum,
    shear: &ShearProfile,
    params: &ModelParams,
    eps: &EpsTriple,
) -> Result<FBreakdown> {
    eps.validate()?;
    let grid = shear.grid();
    let dy = grid.dy();
    let w = grid.y_weights();
    let u1 = shear.u1();
    let nyq = n_hat.nx() / 2;
    let mut comps = FComponents::default();
    let mut per_k = Vec::with_capacity(nyq);
    for k in 1..=nyq {
        let ki = k as i64;
        let m = multipliers(params.a(), ki, eps)?;
        let nk = n_hat.slice(k);
        let ck = c_hat.slice(k);
        let dyc = yops::d1(ck, dy);
        let ik = if k == nyq {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, k as f64)
        };
        let dxc: Vec<Complex64> = ck.iter().map(|z| ik * z).collect();
        let fk = FComponents {
            n: phi_terms_raw(ki, nk, u1, &w, dy, &m).total(),
            dyc: phi_terms_raw(ki, &dyc, u1, &w, dy, &m).total(),
            dxc: phi_terms_raw(ki, &dxc, u1, &w, dy, &m).total(),
            akc: params.a() * k as f64 * phi_terms_raw(ki, ck, u1, &w, dy, &m).total(),
        };
        // +k and -k contribute equally; the Nyquist mode appears once
        comps.add_scaled(&fk, if k == nyq { 1.0 } else { 2.0 });
        per_k.push((ki, fk));
    }
    Ok(FBreakdown {
        total: comps.total(),
        components: comps,
        per_k,
    })
}

/// `F = sum_{k != 0} Phi_k[n] + Phi_k[dy c] + Phi_k[dx c] + A|k| Phi_k[c]`.
pub fn functional_f(
    state: &PksState,
    shear: &ShearProfile,
    params: &ModelParams,
    eps: &EpsTriple,
) -> Result<FBreakdown> {
    let grid = *state.grid();
    if shear.grid() != &grid {
        return Err(PksError::Dimension("shear profile built for another grid".into()));
    }
    if !(state.n.is_finite() && state.c.is_finite()) {
        return Err(PksError::Data("state contains non-finite values".into()));
    }
    let fft = grid.fft();
    let n_hat = fft.forward(state.n.values(), grid.ny());
    let c_hat = fft.forward(state.c.values(), grid.ny());
    functional_f_spectral(&n_hat, &c_hat, shear, params, eps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted exponential rate `lambda` in `value ~ C exp(-lambda t)`.
    pub rate: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares line through `(x, y)`: returns `(slope, intercept, r^2)`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    // a series with no spread is fitted exactly by a flat line
    let r2 = if syy <= f64::EPSILON * f64::EPSILON * n * (1.0 + my * my) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    (slope, intercept, r2)
}

pub const MIN_FIT_SAMPLES: usize = 10;

/// Fits `log(value)` against `t` over samples with `t_lo <= t <= t_hi`.
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(PksError::Domain(format!("fit window ({lo}, {hi}) is empty")));
    }
    let picked: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= lo && *t <= hi)
        .collect();
    if picked.len() < MIN_FIT_SAMPLES {
        return Err(PksError::InsufficientData(format!(
            "{} samples in window ({lo}, {hi}), need at least {MIN_FIT_SAMPLES}",
            picked.len()
        )));
    }
    if let Some((t, v)) = picked.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(PksError::Domain(format!(
            "cannot fit a decay rate through value {v} at t = {t}"
        )));
    }
    let ts: Vec<f64> = picked.iter().map(|p| p.0).collect();
    let logs: Vec<f64> = picked.iter().map(|p| p.1.ln()).collect();
    let (slope, _, r2) = linear_fit(&ts, &logs);
    Ok(DecayFit {
        rate: -slope,
        window,
        r_squared: r2,
        samples: picked.len(),
    })
}

/// Slope of `log lambda` against `log A`.
pub fn scaling_slope(rates: &[(f64, f64)]) -> Result<f64> {
    let mut distinct: Vec<f64> = rates.iter().map(|r| r.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(PksError::InsufficientData(format!(
            "scaling slope needs at least 3 distinct A values, got {}",
            distinct.len()
        )));
    }
    if let Some((a, l)) = rates.iter().find(|(a, l)| !(*a > 0.0 && *l > 0.0)) {
        return Err(PksError::Domain(format!(
            "scaling slope needs positive (A, rate), got ({a}, {l})"
        )));
    }
    let xs: Vec<f64> = rates.iter().map(|r| r.0.ln()).collect();
    let ys: Vec<f64> = rates.iter().map(|r| r.1.ln()).collect();
    Ok(linear_fit(&xs, &ys).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, Grid};
    use crate::model::Regime;

    #[test]
    fn multiplier_values() {
        let eps = EpsTriple::default();
        let m = multipliers(1000.0, 1, &eps).unwrap();
        assert!((m.alpha - 1e-4).abs() < 1e-16);
        assert!((m.beta - 3e-4).abs() < 1e-16);
        assert!((m.gamma - 1e-2).abs() < 1e-16);
        assert!(8.0 * m.beta * m.beta <= m.alpha * m.gamma);
        assert!((8.0 * m.beta * m.beta - 7.2e-7).abs() < 1e-18);

        let m2 = multipliers(1000.0, 2, &eps).unwrap();
        assert!((m2.alpha - 6.2996e-5).abs() < 1e-9);
        assert_eq!(m2, multipliers(1000.0, -2, &eps).unwrap());
    }

    #[test]
    fn multiplier_errors() {
        let bad = EpsTriple {
            beta: 0.004,
            ..EpsTriple::default()
        };
        assert!(matches!(multipliers(1000.0, 1, &bad), Err(PksError::Config(_))));
        assert!(matches!(
            multipliers(1000.0, 0, &EpsTriple::default()),
            Err(PksError::Domain(_))
        ));
    }

    #[test]
    fn phi_of_y_constant_slice() {
        let g = Grid::new(16, 33, 2.0).unwrap();
        let shear = ShearProfile::couette(&g);
        let m = multipliers(100.0, 1, &EpsTriple::default()).unwrap();
        let z = Complex64::new(0.3, -0.4);
        let s = SpectralSlice::new(1, vec![z; g.ny()]);
        let norm2 = TWO_PI * 4.0 * z.norm_sqr();
        let phi = phi_k(&s, &shear, &m).unwrap();
        assert!((phi - (1.0 + m.gamma) * norm2).abs() < 1e-12);
        assert!(matches!(
            phi_k(&SpectralSlice::new(0, vec![z; g.ny()]), &shear, &m),
            Err(PksError::Domain(_))
        ));
    }

    #[test]
    fn f_vanishes_on_x_independent_state() {
        let g = Grid::new(16, 33, 4.0).unwrap();
        let n = Field::from_fn(g, |_, y| (-y * y).exp());
        let c = Field::from_fn(g, |_, y| y.cos());
        let s = PksState::new(0.0, n, c).unwrap();
        let p = ModelParams::new(100.0, Regime::Parabolic).unwrap();
        let f = functional_f(&s, &ShearProfile::couette(&g), &p, &EpsTriple::default()).unwrap();
        assert_eq!(f.total, 0.0);
    }

    #[test]
    fn exact_exponential_fit() {
        let series: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.2;
                (t, (-0.5 * t).exp())
            })
            .collect();
        let fit = fit_decay_rate(&series, (0.0, 10.0)).unwrap();
        assert!((fit.rate - 0.5).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.samples, 50);

        let flat: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 3.0)).collect();
        let fit = fit_decay_rate(&flat, (0.0, 20.0)).unwrap();
        assert_eq!(fit.rate, 0.0);
    }

    #[test]
    fn fit_errors() {
        let few: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 1.0)).collect();
        assert!(matches!(
            fit_decay_rate(&few, (0.0, 10.0)),
            Err(PksError::InsufficientData(_))
        ));
        let neg: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 1.0 - i as f64)).collect();
        assert!(matches!(
            fit_decay_rate(&neg, (0.0, 30.0)),
            Err(PksError::Domain(_))
        ));
    }

    #[test]
    fn scaling_slopes() {
        let a = [1e2, 1e3, 1e4];
        let third: Vec<(f64, f64)> = a.iter().map(|&x: &f64| (x, x.powf(-1.0 / 3.0))).collect();
        assert!((scaling_slope(&third).unwrap() + 1.0 / 3.0).abs() < 1e-12);
        let heat: Vec<(f64, f64)> = a.iter().map(|&x| (x, 1.0 / x)).collect();
        assert!((scaling_slope(&heat).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            scaling_slope(&third[..2]),
            Err(PksError::InsufficientData(_))
        ));
    }
}
