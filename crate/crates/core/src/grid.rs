//! Discretization of the periodic channel `T x [-Ly, Ly]`: grid metadata, real
//! fields, x-Fourier slices, derivatives, quadrature and the zero/nonzero mode
//! projections.

use num_complex::Complex64;

use crate::error::{PksError, Result};
use crate::spectral::{Spectrum, XFft};
use crate::yops;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    ly: f64,
    dx: f64,
    dy: f64,
}

impl Grid {
    /// Production grid: `nx >= 8` a power of two, `ny >= 17`, `Ly > 0`.
    pub fn new(nx: usize, ny: usize, ly: f64) -> Result<Self> {
        if ny < 17 {
            return Err(PksError::Config(format!("ny = {ny} must be at least 17")));
        }
        Self::build(nx, ny, ly)
    }

    /// Relaxed constructor for oracle-sized problems; only requires `ny >= 3`.
    pub fn small(nx: usize, ny: usize, ly: f64) -> Result<Self> {
        if ny < 3 {
            return Err(PksError::Config(format!("ny = {ny} must be at least 3")));
        }
        Self::build(nx, ny, ly)
    }

    fn build(nx: usize, ny: usize, ly: f64) -> Result<Self> {
        if nx < 8 || !nx.is_power_of_two() {
            return Err(PksError::Config(format!(
                "nx = {nx} must be a power of two and at least 8"
            )));
        }
        if !(ly.is_finite() && ly > 0.0) {
            return Err(PksError::Config(format!("Ly = {ly} must be positive")));
        }
        Ok(Self {
            nx,
            ny,
            ly,
            dx: TWO_PI / nx as f64,
            dy: 2.0 * ly / (ny - 1) as f64,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        -self.ly + j as f64 * self.dy
    }

    pub fn y_nodes(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.y(j)).collect()
    }

    pub fn y_weights(&self) -> Vec<f64> {
        yops::trapz_weights(self.ny, self.dy)
    }

    /// Wavenumbers in the order returned by [`transform_x`]: `-nx/2+1 ..= nx/2`.
    pub fn wavenumbers(&self) -> impl Iterator<Item = i64> {
        let h = (self.nx / 2) as i64;
        (-h + 1)..=h
    }

    pub fn fft(&self) -> XFft {
        XFft::new(self.nx)
    }
}

/// Real scalar field sampled on a [`Grid`]; `values[iy * nx + ix]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(PksError::Dimension(format!(
                "field has {} values, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PksError::Data(format!(
                "non-finite value at ix = {}, iy = {}",
                i % grid.nx,
                i / grid.nx
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                values.push(f(grid.x(i), y));
            }
        }
        Self { grid, values }
    }

    /// Field that is constant in x, equal to `profile` in y.
    pub fn from_profile(grid: Grid, profile: &[f64]) -> Result<Self> {
        if profile.len() != grid.ny {
            return Err(PksError::Dimension(format!(
                "profile has {} values, grid has ny = {}",
                profile.len(),
                grid.ny
            )));
        }
        let mut values = Vec::with_capacity(grid.len());
        for &p in profile {
            values.extend(std::iter::repeat_n(p, grid.nx));
        }
        Field::new(grid, values)
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.nx + ix]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|v| a * v).collect())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        check_same_grid(self, other)?;
        Ok(Field::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.add(&other.scaled(-1.0))
    }

    /// Values of column `ix` along y.
    pub fn column(&self, ix: usize) -> Vec<f64> {
        (0..self.grid.ny).map(|j| self.at(ix, j)).collect()
    }
}

pub(crate) fn check_same_grid(a: &Field, b: &Field) -> Result<()> {
    if a.grid != b.grid {
        return Err(PksError::Dimension(format!(
            "fields live on different grids ({}x{} vs {}x{})",
            a.grid.nx, a.grid.ny, b.grid.nx, b.grid.ny
        )));
    }
    Ok(())
}

fn check_finite(f: &Field) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(PksError::Data("field contains non-finite values".into()))
    }
}

/// One x-Fourier coefficient profile `f_hat(k, .)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSlice {
    pub k: i64,
    pub profile: Vec<Complex64>,
}

impl SpectralSlice {
    pub fn new(k: i64, profile: Vec<Complex64>) -> Self {
        Self { k, profile }
    }
}

/// Forward x-transform: slices for `k = -nx/2+1 ..= nx/2`.
pub fn transform_x(field: &Field) -> Result<Vec<SpectralSlice>> {
    check_finite(field)?;
    let grid = field.grid;
    let spec = grid.fft().forward(&field.values, grid.ny);
    Ok(slices_from_spectrum(&spec))
}

/// Inverse x-transform; uses slices with `k >= 0` and assumes conjugate
/// symmetry for the rest.
pub fn inverse_transform_x(grid: &Grid, slices: &[SpectralSlice]) -> Result<Field> {
    let spec = spectrum_from_slices(grid, slices)?;
    Field::new(*grid, grid.fft().inverse(&spec))
}

pub(crate) fn slices_from_spectrum(spec: &Spectrum) -> Vec<SpectralSlice> {
    let h = (spec.nx() / 2) as i64;
    ((-h + 1)..=h)
        .map(|k| {
            let s = spec.slice(k.unsigned_abs() as usize);
            let profile = if k < 0 {
                s.iter().map(|z| z.conj()).collect()
            } else {
                s.to_vec()
            };
            SpectralSlice::new(k, profile)
        })
        .collect()
}

pub(crate) fn spectrum_from_slices(grid: &Grid, slices: &[SpectralSlice]) -> Result<Spectrum> {
    let mut spec = Spectrum::zeros(grid.nx, grid.ny);
    let h = (grid.nx / 2) as i64;
    for s in slices {
        if s.profile.len() != grid.ny {
            return Err(PksError::Dimension(format!(
                "slice k = {} has {} values, grid has ny = {}",
                s.k,
                s.profile.len(),
                grid.ny
            )));
        }
        if s.k < -h + 1 || s.k > h {
            return Err(PksError::Dimension(format!(
                "wavenumber {} outside the resolved range",
                s.k
            )));
        }
        if s.profile.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(PksError::Data(format!("slice k = {} is not finite", s.k)));
        }
        if s.k >= 0 {
            spec.slice_mut(s.k as usize).copy_from_slice(&s.profile);
        }
    }
    Ok(spec)
}

/// Spectral x-derivative (the Nyquist mode is dropped).
pub fn ddx(field: &Field) -> Result<Field> {
    check_finite(field)?;
    let grid = field.grid;
    let fft = grid.fft();
    let spec = fft.forward(&field.values, grid.ny);
    let nyq = grid.nx / 2;
    let mut out = vec![0.0; grid.len()];
    fft.inverse_map_into(&spec, &mut out, |k, z| {
        if k == nyq {
            Complex64::new(0.0, 0.0)
        } else {
            z * Complex64::new(0.0, k as f64)
        }
    });
    Ok(Field::from_raw(grid, out))
}

/// Finite-difference y-derivative. Order 1: central inside, one-sided
/// second-order at the walls. Order 2: central inside, no-flux ghost
/// reflection at the walls.
pub fn ddy(field: &Field, order: u8) -> Result<Field> {
    let grid = field.grid;
    if grid.ny < 5 {
        return Err(PksError::Config(format!(
            "ddy needs ny >= 5, grid has ny = {}",
            grid.ny
        )));
    }
    check_finite(field)?;
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = vec![0.0; grid.len()];
    let mut col = vec![0.0; ny];
    for i in 0..nx {
        for (j, c) in col.iter_mut().enumerate() {
            *c = field.values[j * nx + i];
        }
        let d = match order {
            1 => yops::d1(&col, grid.dy),
            2 => yops::d2_neumann(&col, grid.dy),
            _ => {
                return Err(PksError::Domain(format!(
                    "ddy order must be 1 or 2, got {order}"
                )))
            }
        };
        for (j, v) in d.into_iter().enumerate() {
            out[j * nx + i] = v;
        }
    }
    Ok(Field::from_raw(grid, out))
}

/// Row sums over x times `dx`: the exact periodic quadrature in x.
pub(crate) fn x_integrals(grid: &Grid, values: &[f64]) -> Vec<f64> {
    values
        .chunks_exact(grid.nx)
        .map(|row| row.iter().sum::<f64>() * grid.dx)
        .collect()
}

/// `int int f dx dy`: exact in x, trapezoid in y.
pub fn integrate(field: &Field) -> f64 {
    yops::trapz(&x_integrals(&field.grid, &field.values), field.grid.dy)
}

pub fn lp_norm(field: &Field, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(PksError::Domain(format!("L^p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(field.max_abs());
    }
    let powered: Vec<f64> = field.values.iter().map(|v| v.abs().powf(p)).collect();
    let s = yops::trapz(&x_integrals(&field.grid, &powered), field.grid.dy);
    Ok(s.powf(1.0 / p))
}

/// Split into the x-average profile and the remainder.
pub fn mode_split(field: &Field) -> (Vec<f64>, Field) {
    let grid = field.grid;
    let nx = grid.nx;
    let zero: Vec<f64> = field
        .values
        .chunks_exact(nx)
        .map(|row| row.iter().sum::<f64>() / nx as f64)
        .collect();
    let mut rest = field.values.clone();
    for (row, z) in rest.chunks_exact_mut(nx).zip(&zero) {
        for v in row {
            *v -= z;
        }
    }
    (zero, Field::from_raw(grid, rest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(32, 65, 4.0).unwrap()
    }

    fn max_diff(a: &Field, b: &Field) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(12, 65, 4.0).is_err());
        assert!(Grid::new(4, 65, 4.0).is_err());
        assert!(Grid::new(16, 9, 4.0).is_err());
        assert!(Grid::new(16, 17, -1.0).is_err());
        assert!(Grid::small(8, 9, 1.0).is_ok());
        let g = Grid::new(64, 257, 8.0).unwrap();
        assert!((g.dy() - 0.0625).abs() < 1e-15);
        assert_eq!(g.y(256), 8.0);
    }

    #[test]
    fn field_rejects_bad_input() {
        let g = grid();
        assert!(matches!(
            Field::new(g, vec![0.0; 3]),
            Err(PksError::Dimension(_))
        ));
        let mut v = vec![0.0; g.len()];
        v[7] = f64::NAN;
        assert!(matches!(Field::new(g, v), Err(PksError::Data(_))));
    }

    #[test]
    fn single_mode_transform() {
        let g = grid();
        let f = Field::from_fn(g, |x, y| (3.0 * x).cos() * (-y * y).exp());
        let slices = transform_x(&f).unwrap();
        assert_eq!(slices.len(), 32);
        assert_eq!(slices.first().unwrap().k, -15);
        assert_eq!(slices.last().unwrap().k, 16);
        for s in &slices {
            for (j, z) in s.profile.iter().enumerate() {
                let want = if s.k.abs() == 3 {
                    0.5 * (-g.y(j) * g.y(j)).exp()
                } else {
                    0.0
                };
                assert!((z - Complex64::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn constant_transform() {
        let g = grid();
        let slices = transform_x(&Field::constant(g, 1.0)).unwrap();
        for s in slices {
            let want = if s.k == 0 { 1.0 } else { 0.0 };
            assert!(s.profile.iter().all(|z| (z.re - want).abs() < 1e-15 && z.im.abs() < 1e-15));
        }
    }

    #[test]
    fn transform_errors() {
        let g = grid();
        let f = Field::from_raw(g, vec![f64::INFINITY; g.len()]);
        assert!(matches!(transform_x(&f), Err(PksError::Data(_))));
        let bad = vec![SpectralSlice::new(0, vec![Complex64::new(0.0, 0.0); 3])];
        assert!(matches!(
            inverse_transform_x(&g, &bad),
            Err(PksError::Dimension(_))
        ));
    }

    #[test]
    fn x_derivatives() {
        let g = grid();
        let f = Field::from_fn(g, |x, _| (2.0 * x).sin());
        let want = Field::from_fn(g, |x, _| 2.0 * (2.0 * x).cos());
        assert!(max_diff(&ddx(&f).unwrap(), &want) < 1e-12);

        let f = Field::from_fn(g, |x, y| x.sin() * (-y * y).exp());
        let want = Field::from_fn(g, |x, y| x.cos() * (-y * y).exp());
        assert!(max_diff(&ddx(&f).unwrap(), &want) < 1e-12);

        assert!(ddx(&Field::constant(g, 4.0)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn y_derivatives_of_quadratic() {
        let g = grid();
        let f = Field::from_fn(g, |_, y| y * y);
        let d1 = ddy(&f, 1).unwrap();
        let d2 = ddy(&f, 2).unwrap();
        for j in 1..g.ny() - 1 {
            for i in 0..g.nx() {
                assert!((d1.at(i, j) - 2.0 * g.y(j)).abs() < 1e-12);
                assert!((d2.at(i, j) - 2.0).abs() < 1e-10);
            }
        }
        assert!(matches!(ddy(&f, 3), Err(PksError::Domain(_))));
        let tiny = Grid::small(8, 4, 1.0).unwrap();
        assert!(matches!(
            ddy(&Field::zeros(tiny), 1),
            Err(PksError::Config(_))
        ));
    }

    #[test]
    fn quadrature() {
        let g = Grid::new(16, 257, 8.0).unwrap();
        let area = integrate(&Field::constant(g, 1.0));
        assert!((area - 32.0 * std::f64::consts::PI).abs() < 1e-12);
        let f = Field::from_fn(g, |x, y| x.sin() * (1.0 + y * y));
        assert!(integrate(&f).abs() < 1e-12);

        let g = Grid::new(16, 17, 1.0).unwrap();
        let f = Field::from_fn(g, |x, _| x.sin());
        let l2 = lp_norm(&f, 2.0).unwrap();
        assert!((l2 - (TWO_PI).sqrt()).abs() < 1e-8);
        assert_eq!(lp_norm(&Field::constant(g, -2.5), f64::INFINITY).unwrap(), 2.5);
        assert!(matches!(lp_norm(&f, 0.5), Err(PksError::Domain(_))));
    }

    #[test]
    fn mode_split_examples() {
        let g = grid();
        let f = Field::from_fn(g, |x, _| 3.0 + x.sin());
        let (z, rest) = mode_split(&f);
        assert!(z.iter().all(|v| (v - 3.0).abs() < 1e-14));
        assert!(max_diff(&rest, &Field::from_fn(g, |x, _| x.sin())) < 1e-14);

        let f = Field::from_fn(g, |_, y| y.cos());
        assert!(mode_split(&f).1.max_abs() < 1e-15);
    }
}
