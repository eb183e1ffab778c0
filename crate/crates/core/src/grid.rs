//! Periodic box `[-L, L)^d` with FFT calculus, trapezoid quadrature and the
//! translation/boost/gauge action on fields.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    points: usize,
    half_length: f64,
}

impl GridSpec {
    pub fn new(dim: usize, points: usize, half_length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} is not 1 or 2")));
        }
        if points < 16 || points % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "{points} points per axis; need an even count of at least 16"
            )));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::InvalidGrid(format!("half length {half_length}")));
        }
        Ok(Self {
            dim,
            points,
            half_length,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.points as f64
    }

    /// Total number of samples, `N^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

struct Inner {
    spec: GridSpec,
    axis: Vec<f64>,
    wavenumbers: Vec<f64>,
    kinetic: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Shared handle to a grid and its cached FFT plans. Cloning is cheap.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<Inner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Grid").field(&self.inner.spec).finish()
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Self {
        let n = spec.points;
        let h = spec.spacing();
        let axis: Vec<f64> = (0..n).map(|j| -spec.half_length + j as f64 * h).collect();
        let wavenumbers: Vec<f64> = (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                PI * m / spec.half_length
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut grid = Inner {
            spec,
            axis,
            wavenumbers,
            kinetic: Vec::new(),
            forward,
            inverse,
        };
        let total = spec.len();
        let mut kinetic = vec![0.0; total];
        for (idx, k2) in kinetic.iter_mut().enumerate() {
            *k2 = (0..spec.dim)
                .map(|ax| {
                    let k = grid.wavenumbers[axis_index(&spec, idx, ax)];
                    k * k
                })
                .sum();
        }
        grid.kinetic = kinetic;
        Self {
            inner: Arc::new(grid),
        }
    }

    pub fn build(dim: usize, points: usize, half_length: f64) -> Result<Self> {
        Ok(Self::new(GridSpec::new(dim, points, half_length)?))
    }

    pub fn spec(&self) -> GridSpec {
        self.inner.spec
    }

    pub fn dim(&self) -> usize {
        self.inner.spec.dim
    }

    pub fn points(&self) -> usize {
        self.inner.spec.points
    }

    pub fn len(&self) -> usize {
        self.inner.spec.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.inner.spec.spacing()
    }

    /// Quadrature weight `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }

    /// One-dimensional node coordinates `x_j = -L + j h`.
    pub fn axis(&self) -> &[f64] {
        &self.inner.axis
    }

    /// Wavenumbers in FFT order, `k = pi n / L` with `n` in `[-N/2, N/2)`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.wavenumbers
    }

    /// `|k|^2` for every flattened spectral index, Nyquist included.
    pub fn kinetic_symbol(&self) -> &[f64] {
        &self.inner.kinetic
    }

    pub fn is_compatible(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.spec == other.inner.spec
    }

    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        axis_index(&self.inner.spec, idx, axis)
    }

    pub fn coordinate(&self, idx: usize, axis: usize) -> f64 {
        self.inner.axis[self.axis_index(idx, axis)]
    }

    /// Coordinates of sample `idx`; entries past `dim` are zero.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let mut x = [0.0; 2];
        for (ax, xi) in x.iter_mut().enumerate().take(self.dim()) {
            *xi = self.coordinate(idx, ax);
        }
        x
    }

    pub fn coordinate_field(&self, axis: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.coordinate(i, axis)).collect()
    }

    pub fn radius_squared_field(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let x = self.point(i);
                x[..self.dim()].iter().map(|v| v * v).sum()
            })
            .collect()
    }

    /// Wavenumber along `axis` for each flattened spectral index.
    pub fn wavevector_field(&self, axis: usize, zero_nyquist: bool) -> Vec<f64> {
        let n = self.points();
        (0..self.len())
            .map(|i| {
                let j = self.axis_index(i, axis);
                if zero_nyquist && j == n / 2 {
                    0.0
                } else {
                    self.inner.wavenumbers[j]
                }
            })
            .collect()
    }

    /// Index of the reflected sample `x -> -x`.
    pub fn reflect_index(&self, idx: usize) -> usize {
        let n = self.points();
        let mut out = 0;
        for ax in 0..self.dim() {
            let j = self.axis_index(idx, ax);
            let r = (n - j) % n;
            out = out * n + r;
        }
        out
    }

    fn transform(&self, buf: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.points();
        plan.process(buf);
        if self.dim() == 2 {
            let mut line = vec![C64::default(); n];
            for col in 0..n {
                for (row, v) in line.iter_mut().enumerate() {
                    *v = buf[row * n + col];
                }
                plan.process(&mut line);
                for (row, v) in line.iter().enumerate() {
                    buf[row * n + col] = *v;
                }
            }
        }
    }

    /// Unnormalized forward DFT in place.
    pub fn fft(&self, buf: &mut [C64]) {
        debug_assert_eq!(buf.len(), self.len());
        self.transform(buf, &self.inner.forward);
    }

    /// Inverse DFT in place, normalized so that `ifft(fft(u)) = u`.
    pub fn ifft(&self, buf: &mut [C64]) {
        debug_assert_eq!(buf.len(), self.len());
        self.transform(buf, &self.inner.inverse);
        let scale = 1.0 / self.len() as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }

    pub fn spectrum(&self, values: &[C64]) -> Vec<C64> {
        let mut buf = values.to_vec();
        self.fft(&mut buf);
        buf
    }

    /// Applies a Fourier multiplier given per flattened spectral index.
    pub fn apply_multiplier(&self, values: &[C64], symbol: impl Fn(usize) -> C64) -> Vec<C64> {
        let mut buf = self.spectrum(values);
        buf.iter_mut().enumerate().for_each(|(i, v)| *v *= symbol(i));
        self.ifft(&mut buf);
        buf
    }

    /// Physical values of `g(x - shift)` given the spectrum of `g`.
    pub fn translate_spectrum(&self, spectrum: &[C64], shift: &[f64]) -> Vec<C64> {
        let mut buf = spectrum.to_vec();
        for (i, v) in buf.iter_mut().enumerate() {
            let phase: f64 = (0..self.dim())
                .map(|ax| self.inner.wavenumbers[self.axis_index(i, ax)] * shift[ax])
                .sum();
            *v *= C64::from_polar(1.0, -phase);
        }
        self.ifft(&mut buf);
        buf
    }

    pub fn translate(&self, values: &[C64], shift: &[f64]) -> Vec<C64> {
        self.translate_spectrum(&self.spectrum(values), shift)
    }

    /// Spectral derivative of order 1 or 2 along `axis`; odd orders drop the Nyquist mode.
    pub fn derivative(&self, values: &[C64], axis: usize, order: u32) -> Vec<C64> {
        let k = self.wavevector_field(axis, order % 2 == 1);
        self.apply_multiplier(values, |i| C64::new(0.0, k[i]).powu(order))
    }

    pub fn derivative_real(&self, values: &[f64], axis: usize, order: u32) -> Vec<f64> {
        let c: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.derivative(&c, axis, order).iter().map(|v| v.re).collect()
    }

    pub fn laplacian(&self, values: &[C64]) -> Vec<C64> {
        let k2 = self.kinetic_symbol();
        self.apply_multiplier(values, |i| C64::new(-k2[i], 0.0))
    }

    pub fn laplacian_real(&self, values: &[f64]) -> Vec<f64> {
        let c: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.laplacian(&c).iter().map(|v| v.re).collect()
    }

    /// `h^d sum a b` for real fields.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    /// `h^d sum u conj(w)` for raw complex samples.
    pub fn pairing(&self, u: &[C64], w: &[C64]) -> C64 {
        self.cell_volume() * u.iter().zip(w).map(|(x, y)| x * y.conj()).sum::<C64>()
    }

    /// `||grad u||^2` evaluated on the spectrum (Parseval).
    pub fn gradient_norm_sq(&self, values: &[C64]) -> f64 {
        let spec = self.spectrum(values);
        let k2 = self.kinetic_symbol();
        self.cell_volume() / self.len() as f64
            * spec.iter().zip(k2).map(|(v, k)| v.norm_sqr() * k).sum::<f64>()
    }
}

fn axis_index(spec: &GridSpec, idx: usize, axis: usize) -> usize {
    let stride = spec.points.pow((spec.dim - 1 - axis) as u32);
    (idx / stride) % spec.points
}

/// Sampled complex field on a grid.
#[derive(Clone)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<C64>,
}

impl fmt::Debug for ComplexField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComplexField")
            .field("grid", &self.grid.spec())
            .field("len", &self.values.len())
            .finish()
    }
}

impl ComplexField {
    pub fn new(grid: &Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values"));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::from_raw(grid, vec![C64::default(); grid.len()])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> C64) -> Self {
        let d = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..d])).collect();
        Self::from_raw(grid, values)
    }

    pub fn from_real(grid: &Grid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|v| v * c).collect())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn imag_part(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.im).collect()
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        ensure_same_grid(self, other)?;
        Ok(Self::from_raw(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: C64, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + c * b)
    }

    pub fn norm_l2(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

pub(crate) fn ensure_same_grid(u: &ComplexField, w: &ComplexField) -> Result<()> {
    if u.grid.is_compatible(&w.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// `Re ∫ u conj(w)` by trapezoid quadrature.
pub fn inner_re(u: &ComplexField, w: &ComplexField) -> Result<f64> {
    ensure_same_grid(u, w)?;
    Ok(u.grid.pairing(&u.values, &w.values).re)
}

/// Symplectic pairing `Im ∫ u conj(w)`.
pub fn sym_form(u: &ComplexField, w: &ComplexField) -> Result<f64> {
    ensure_same_grid(u, w)?;
    Ok(u.grid.pairing(&u.values, &w.values).im)
}

pub fn spectral_derive(u: &ComplexField, axis: usize, order: u32) -> Result<ComplexField> {
    if axis >= u.grid.dim() {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} on a {}-dimensional grid",
            u.grid.dim()
        )));
    }
    if order != 1 && order != 2 {
        return Err(Error::InvalidParameter(format!("derivative order {order}")));
    }
    Ok(ComplexField::from_raw(
        &u.grid,
        u.grid.derivative(&u.values, axis, order),
    ))
}

/// L2 norm computed from the Fourier coefficients.
pub fn fourier_l2(u: &ComplexField) -> f64 {
    let spec = u.grid.spectrum(&u.values);
    (u.grid.cell_volume() / u.grid.len() as f64 * spec.iter().map(|v| v.norm_sqr()).sum::<f64>())
        .sqrt()
}

/// Reduces a phase to `[0, 2π)`.
pub fn wrap_phase(gamma: f64) -> f64 {
    let g = gamma.rem_euclid(TAU);
    if g >= TAU {
        0.0
    } else {
        g
    }
}

/// Position, momentum and phase of the symmetry action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryParams {
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    gamma: f64,
}

impl SymmetryParams {
    pub fn new(a: Vec<f64>, p: Vec<f64>, gamma: f64) -> Result<Self> {
        if a.len() != p.len() || a.is_empty() || a.len() > 2 {
            return Err(Error::InvalidParameter(format!(
                "position has {} components and momentum {}",
                a.len(),
                p.len()
            )));
        }
        if a.iter().chain(&p).any(|v| !v.is_finite()) || !gamma.is_finite() {
            return Err(Error::NonFinite("symmetry parameters"));
        }
        Ok(Self {
            a,
            p,
            gamma: wrap_phase(gamma),
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            a: vec![0.0; dim],
            p: vec![0.0; dim],
            gamma: 0.0,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }
}

fn check_symmetry_dim(s: &SymmetryParams, grid: &Grid) -> Result<()> {
    if s.dim() != grid.dim() {
        return Err(Error::InvalidParameter(format!(
            "symmetry of dimension {} on a {}-dimensional grid",
            s.dim(),
            grid.dim()
        )));
    }
    Ok(())
}

/// Pointwise multiplication by `exp(i(sign * p.x + phase))`.
pub(crate) fn boost_in_place(grid: &Grid, values: &mut [C64], p: &[f64], phase: f64, sign: f64) {
    let d = grid.dim();
    for (i, v) in values.iter_mut().enumerate() {
        let x = grid.point(i);
        let px: f64 = (0..d).map(|ax| p[ax] * x[ax]).sum();
        *v *= C64::from_polar(1.0, sign * px + phase);
    }
}

/// `(S g)(x) = exp(i p.(x - a) + i gamma) g(x - a)`, translation done spectrally.
pub fn apply_symmetry(s: &SymmetryParams, g: &ComplexField) -> Result<ComplexField> {
    check_symmetry_dim(s, &g.grid)?;
    let mut values = g.values.clone();
    boost_in_place(&g.grid, &mut values, &s.p, s.gamma, 1.0);
    Ok(ComplexField::from_raw(
        &g.grid,
        g.grid.translate(&values, &s.a),
    ))
}

/// Exact discrete inverse of [`apply_symmetry`].
pub fn apply_symmetry_inverse(s: &SymmetryParams, psi: &ComplexField) -> Result<ComplexField> {
    check_symmetry_dim(s, &psi.grid)?;
    let neg: Vec<f64> = s.a.iter().map(|v| -v).collect();
    let mut values = psi.grid.translate(&psi.values, &neg);
    boost_in_place(&psi.grid, &mut values, &s.p, -s.gamma, -1.0);
    Ok(ComplexField::from_raw(&psi.grid, values))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldNorms {
    pub l2: f64,
    pub h1: f64,
    pub weighted: f64,
    pub energy: f64,
}

/// `(1 + eps^2 |x|^2)^(r/2)` on the box coordinates.
pub fn growth_weight(grid: &Grid, eps_v: f64, r: f64) -> Vec<f64> {
    grid.radius_squared_field()
        .into_iter()
        .map(|x2| (1.0 + eps_v * eps_v * x2).powf(0.5 * r))
        .collect()
}

pub fn norms(u: &ComplexField, eps_v: f64, r: f64) -> Result<FieldNorms> {
    if !(eps_v > 0.0) || !(r >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "norm weights need eps_V > 0 and r >= 1, got {eps_v}, {r}"
        )));
    }
    let grid = &u.grid;
    let hd = grid.cell_volume();
    let l2_sq = hd * u.values.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let h1_sq = l2_sq + grid.gradient_norm_sq(&u.values);
    let weight = growth_weight(grid, eps_v, r);
    let weighted_sq = hd
        * u.values
            .iter()
            .zip(&weight)
            .map(|(v, w)| w * v.norm_sqr())
            .sum::<f64>();
    Ok(FieldNorms {
        l2: l2_sq.sqrt(),
        h1: h1_sq.sqrt(),
        weighted: weighted_sq.sqrt(),
        energy: (h1_sq + weighted_sq).sqrt(),
    })
}
