//! Slowly varying external potentials `V(x) = W(ε x)`, the second-order
//! Taylor remainder about a soliton centre, and margin checkers for the growth
//! and remainder inequalities those potentials satisfy.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::profile::SolitonProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PotentialFamily {
    /// `W(y) = y·A·y + v·y + c`, `A` row-major `d×d`.
    Quadratic { a: Vec<f64>, v: Vec<f64>, c: f64 },
    /// `W(y) = c2 |y|^2 + c4 |y|^4`
    EvenQuartic { c2: f64, c4: f64 },
    Zero,
}

/// Constants in the growth bounds `|∂^β W| ≤ C_V ⟨y⟩^(r-|β|)`,
/// `Hess W ≥ ρ₁ ⟨y⟩^(r-2)` and `W ≥ c_V |y|^r` for `|y| ≥ c_L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub upper: f64,
    pub rho1: f64,
    pub far: f64,
    pub far_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    family: PotentialFamily,
    dim: usize,
    eps_v: f64,
    r: f64,
    constants: BoundConstants,
}

fn bracket(y2: f64) -> f64 {
    (1.0 + y2).sqrt()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn sym_matrix(dim: usize, a: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(dim, dim, a)
}

impl PotentialSpec {
    pub fn new(dim: usize, family: PotentialFamily, eps_v: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!("dimension {dim}")));
        }
        if !(eps_v > 0.0 && eps_v.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps_V = {eps_v} must be positive")));
        }
        let (r, constants) = match &family {
            PotentialFamily::Quadratic { a, v, c } => quadratic_constants(dim, a, v, *c)?,
            PotentialFamily::EvenQuartic { c2, c4 } => {
                if !(*c2 > 0.0 && *c4 > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "quartic coefficients ({c2}, {c4}) must be positive"
                    )));
                }
                let upper = [c2 + c4, 2.0 * c2 + 4.0 * c4, 2.0 * c2 + 12.0 * c4, 24.0 * c4]
                    .into_iter()
                    .fold(0.0, f64::max);
                (
                    4.0,
                    BoundConstants {
                        upper,
                        rho1: (2.0 * c2).min(4.0 * c4),
                        far: *c4,
                        far_radius: 1.0,
                    },
                )
            }
            PotentialFamily::Zero => (
                2.0,
                BoundConstants {
                    upper: 0.0,
                    rho1: 0.0,
                    far: 0.0,
                    far_radius: 0.0,
                },
            ),
        };
        Ok(Self {
            family,
            dim,
            eps_v,
            r,
            constants,
        })
    }

    /// `V(x) = ε² |x|²`, unit-matrix quadratic well.
    pub fn harmonic(dim: usize, eps_v: f64) -> Result<Self> {
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            a[i * dim + i] = 1.0;
        }
        Self::new(
            dim,
            PotentialFamily::Quadratic {
                a,
                v: vec![0.0; dim],
                c: 0.0,
            },
            eps_v,
        )
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, PotentialFamily::Zero, 1.0).expect("zero potential is always valid")
    }

    pub fn family(&self) -> &PotentialFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eps_v(&self) -> f64 {
        self.eps_v
    }

    pub fn growth_rate(&self) -> f64 {
        self.r
    }

    pub fn constants(&self) -> BoundConstants {
        self.constants
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.family, PotentialFamily::Zero)
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.family, PotentialFamily::Quadratic { .. })
    }

    pub fn w(&self, y: &[f64]) -> f64 {
        match &self.family {
            PotentialFamily::Quadratic { a, v, c } => {
                let d = self.dim;
                let mut s = *c;
                for i in 0..d {
                    s += v[i] * y[i];
                    for j in 0..d {
                        s += y[i] * a[i * d + j] * y[j];
                    }
                }
                s
            }
            PotentialFamily::EvenQuartic { c2, c4 } => {
                let y2 = norm2(y);
                c2 * y2 + c4 * y2 * y2
            }
            PotentialFamily::Zero => 0.0,
        }
    }

    pub fn grad_w(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim;
        match &self.family {
            PotentialFamily::Quadratic { a, v, .. } => (0..d)
                .map(|i| {
                    v[i] + (0..d)
                        .map(|j| (a[i * d + j] + a[j * d + i]) * y[j])
                        .sum::<f64>()
                })
                .collect(),
            PotentialFamily::EvenQuartic { c2, c4 } => {
                let y2 = norm2(y);
                y.iter().map(|yi| (2.0 * c2 + 4.0 * c4 * y2) * yi).collect()
            }
            PotentialFamily::Zero => vec![0.0; d],
        }
    }

    pub fn hess_w(&self, y: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        match &self.family {
            PotentialFamily::Quadratic { a, .. } => {
                DMatrix::from_fn(d, d, |i, j| a[i * d + j] + a[j * d + i])
            }
            PotentialFamily::EvenQuartic { c2, c4 } => {
                let y2 = norm2(y);
                DMatrix::from_fn(d, d, |i, j| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    (2.0 * c2 + 4.0 * c4 * y2) * delta + 8.0 * c4 * y[i] * y[j]
                })
            }
            PotentialFamily::Zero => DMatrix::zeros(d, d),
        }
    }

    /// Third derivatives `∂_i ∂_j ∂_k W`, flattened as `i d² + j d + k`.
    pub fn third_w(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d * d];
        if let PotentialFamily::EvenQuartic { c4, .. } = &self.family {
            let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        out[(i * d + j) * d + k] =
                            8.0 * c4 * (delta(i, j) * y[k] + delta(i, k) * y[j] + delta(j, k) * y[i]);
                    }
                }
            }
        }
        out
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| self.eps_v * v).collect()
    }

    pub fn eval_v(&self, x: &[f64]) -> f64 {
        self.w(&self.scaled(x))
    }

    pub fn grad_v(&self, x: &[f64]) -> Vec<f64> {
        self.grad_w(&self.scaled(x))
            .into_iter()
            .map(|g| self.eps_v * g)
            .collect()
    }

    pub fn hess_v(&self, x: &[f64]) -> DMatrix<f64> {
        self.hess_w(&self.scaled(x)) * (self.eps_v * self.eps_v)
    }

    pub fn third_v(&self, x: &[f64]) -> Vec<f64> {
        let e3 = self.eps_v.powi(3);
        self.third_w(&self.scaled(x)).into_iter().map(|t| e3 * t).collect()
    }

    /// `R_V(x, a) = V(x + a) - V(a) - ∇V(a)·x`.
    pub fn eval_rv(&self, x: &[f64], a: &[f64]) -> f64 {
        let xa: Vec<f64> = x.iter().zip(a).map(|(x, a)| x + a).collect();
        let g = self.grad_v(a);
        self.eval_v(&xa) - self.eval_v(a) - x.iter().zip(&g).map(|(x, g)| x * g).sum::<f64>()
    }

    /// `∇_a R_V(x, a) = ∇V(x + a) - ∇V(a) - Hess V(a) x`.
    pub fn grad_a_rv(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let xa: Vec<f64> = x.iter().zip(a).map(|(x, a)| x + a).collect();
        let g1 = self.grad_v(&xa);
        let g0 = self.grad_v(a);
        let h = self.hess_v(a);
        (0..self.dim)
            .map(|i| g1[i] - g0[i] - (0..self.dim).map(|j| h[(i, j)] * x[j]).sum::<f64>())
            .collect()
    }

    /// `∂_x R_V(x, a) = ∇V(x + a) - ∇V(a)`.
    pub fn grad_x_rv(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let xa: Vec<f64> = x.iter().zip(a).map(|(x, a)| x + a).collect();
        let g1 = self.grad_v(&xa);
        let g0 = self.grad_v(a);
        g1.iter().zip(&g0).map(|(p, q)| p - q).collect()
    }

    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        let d = grid.dim();
        (0..grid.len()).map(|i| self.eval_v(&grid.point(i)[..d])).collect()
    }

    /// `R_V(·, a)` on the grid nodes.
    pub fn sample_rv(&self, grid: &Grid, a: &[f64]) -> Vec<f64> {
        let d = grid.dim();
        (0..grid.len()).map(|i| self.eval_rv(&grid.point(i)[..d], a)).collect()
    }

    /// `∂_{x_k} R_V(·, a)` on the grid, one field per axis.
    pub fn sample_grad_x_rv(&self, grid: &Grid, a: &[f64]) -> Vec<Vec<f64>> {
        let d = grid.dim();
        let rows: Vec<Vec<f64>> = (0..grid.len())
            .map(|i| self.grad_x_rv(&grid.point(i)[..d], a))
            .collect();
        (0..d).map(|k| rows.iter().map(|r| r[k]).collect()).collect()
    }

    /// `∂_{a_k} R_V(·, a)` on the grid, one field per axis.
    pub fn sample_grad_a_rv(&self, grid: &Grid, a: &[f64]) -> Vec<Vec<f64>> {
        let d = grid.dim();
        let rows: Vec<Vec<f64>> = (0..grid.len())
            .map(|i| self.grad_a_rv(&grid.point(i)[..d], a))
            .collect();
        (0..d).map(|k| rows.iter().map(|r| r[k]).collect()).collect()
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "point of dimension {} for a {}-dimensional potential",
                v.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Margin in `R_V(x) ≥ C₀ ρ₁ ε² |x|² ⟨εx⟩^(r-2)`. `c_a` bounds `ε|a|`
    /// and is only consulted when `r ≤ 2`.
    pub fn lower_bound_margin(&self, x: &[f64], a: &[f64], c_a: f64) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(a)?;
        let c0 = lower_bound_constant(self.r, self.eps_v * norm2(a).sqrt(), c_a)?;
        let e = self.eps_v;
        let x2 = norm2(x);
        let bound = c0 * self.constants.rho1 * e * e * x2 * bracket(e * e * x2).powf(self.r - 2.0);
        Ok(self.eval_rv(x, a) - bound)
    }

    /// As [`Self::lower_bound_margin`] but always with the bounded-centre
    /// constant, which covers `r ≤ 2` (including `r = 2`) when `ε|a| ≤ c_a`.
    pub fn lower_bound_margin_bounded(&self, x: &[f64], a: &[f64], c_a: f64) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(a)?;
        let c0 = bounded_lower_constant(self.r, self.eps_v * norm2(a).sqrt(), c_a)?;
        let e = self.eps_v;
        let x2 = norm2(x);
        let bound = c0 * self.constants.rho1 * e * e * x2 * bracket(e * e * x2).powf(self.r - 2.0);
        Ok(self.eval_rv(x, a) - bound)
    }

    /// Margins of the upper bounds on `∂_a R_V` and on `R_V`, for `ε|a| ≤ c_a`.
    pub fn upper_bound_margins(&self, x: &[f64], a: &[f64], c_a: f64) -> Result<UpperMargins> {
        self.check_dim(x)?;
        self.check_dim(a)?;
        let e = self.eps_v;
        if e * norm2(a).sqrt() > c_a {
            return Err(Error::HypothesisViolation(format!(
                "eps_V |a| = {} exceeds C_a = {c_a}",
                e * norm2(a).sqrt()
            )));
        }
        let r = self.r;
        let d = self.dim as f64;
        let cv = self.constants.upper;
        let x2 = norm2(x);
        let br = bracket(e * e * x2);
        let (c_grad, exponent) = if r >= 2.0 {
            (
                0.5 * cv * d * (2.0 * (1.0 + c_a * c_a)).powf(0.5 * (r - 3.0).max(0.0)),
                (r - 3.0).max(0.0),
            )
        } else if r >= 1.0 {
            (cv * d * (6.0 * 2f64.sqrt() + (1.0 + c_a).ln()), r - 2.0)
        } else {
            return Err(Error::HypothesisViolation(format!("growth rate {r} < 1")));
        };
        let grad = self
            .grad_a_rv(x, a)
            .into_iter()
            .map(f64::abs)
            .fold(0.0, f64::max);
        let e3x2 = e.powi(3) * x2;
        let c_rv = 2.0 * cv * (2.0 + 2.0 * c_a * c_a).powf(0.5 * (r - 1.0));
        Ok(UpperMargins {
            grad_a: c_grad * e3x2 * br.powf(r - 2.0) - grad,
            grad_a_sharp: c_grad * e3x2 * br.powf(exponent) - grad,
            rv: c_rv * (1.0 + e * e * x2 * br.powf(r - 2.0)) - self.eval_rv(x, a),
        })
    }

    /// Margins of the four growth assumptions at a point `y` of the `W` variable:
    /// `[value, gradient, hessian entries, third derivatives, lower hessian, far field]`.
    pub fn assumption_margins(&self, y: &[f64]) -> Vec<f64> {
        let c = self.constants;
        let br = bracket(norm2(y));
        let r = self.r;
        let mut out = Vec::with_capacity(6);
        out.push(c.upper * br.powf(r) - self.w(y).abs());
        let g = self.grad_w(y).into_iter().map(f64::abs).fold(0.0, f64::max);
        out.push(c.upper * br.powf(r - 1.0) - g);
        let h = self.hess_w(y);
        out.push(c.upper * br.powf(r - 2.0) - h.iter().map(|v| v.abs()).fold(0.0, f64::max));
        let t = self.third_w(y).into_iter().map(f64::abs).fold(0.0, f64::max);
        out.push(c.upper * br.powf(r - 3.0) - t);
        let lam_min = SymmetricEigen::new(h).eigenvalues.min();
        out.push(lam_min - c.rho1 * br.powf(r - 2.0));
        let ny = norm2(y).sqrt();
        out.push(if ny >= c.far_radius {
            self.w(y) - c.far * ny.powf(r)
        } else {
            0.0
        });
        out
    }

    /// `V_eff(a) = ‖η‖⁻² ∫ V(a + x) η²(x) dx`.
    pub fn effective_potential(&self, profile: &SolitonProfile, a: &[f64]) -> f64 {
        let grid = &profile.grid;
        let d = grid.dim();
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, e) in profile.eta.iter().enumerate() {
            let x = grid.point(i);
            let xa: Vec<f64> = (0..d).map(|k| x[k] + a[k]).collect();
            num += self.eval_v(&xa) * e * e;
            den += e * e;
        }
        num / den
    }

    pub fn effective_gradient(&self, profile: &SolitonProfile, a: &[f64]) -> Vec<f64> {
        let grid = &profile.grid;
        let d = grid.dim();
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        for (i, e) in profile.eta.iter().enumerate() {
            let x = grid.point(i);
            let xa: Vec<f64> = (0..d).map(|k| x[k] + a[k]).collect();
            let g = self.grad_v(&xa);
            for k in 0..d {
                num[k] += g[k] * e * e;
            }
            den += e * e;
        }
        num.into_iter().map(|v| v / den).collect()
    }
}

fn quadratic_constants(dim: usize, a: &[f64], v: &[f64], c: f64) -> Result<(f64, BoundConstants)> {
    if a.len() != dim * dim || v.len() != dim {
        return Err(Error::InvalidParameter(format!(
            "quadratic coefficients have sizes ({}, {}) for dimension {dim}",
            a.len(),
            v.len()
        )));
    }
    for i in 0..dim {
        for j in 0..dim {
            if (a[i * dim + j] - a[j * dim + i]).abs() > 1e-14 * (1.0 + a[i * dim + j].abs()) {
                return Err(Error::InvalidParameter("quadratic matrix is not symmetric".into()));
            }
        }
    }
    let m = sym_matrix(dim, a);
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let lam_min = eig.min();
    let lam_max = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if lam_min < -1e-14 {
        return Err(Error::InvalidParameter(format!(
            "quadratic matrix has negative eigenvalue {lam_min}"
        )));
    }
    let v_norm = norm2(v).sqrt();
    let minimum = if v_norm == 0.0 {
        c
    } else {
        if lam_min <= 0.0 {
            return Err(Error::InvalidParameter(
                "a linear term needs a positive definite matrix".into(),
            ));
        }
        let sol = m
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(v))
            .ok_or_else(|| Error::InvalidParameter("singular quadratic matrix".into()))?;
        c - 0.25 * sol.dot(&nalgebra::DVector::from_column_slice(v))
    };
    if minimum.abs() > 1e-12 * (1.0 + c.abs()) {
        return Err(Error::InvalidParameter(format!(
            "quadratic potential has minimum {minimum}, expected 0"
        )));
    }
    let upper = (lam_max + v_norm + c.abs()).max(2.0 * lam_max + v_norm);
    let (far, far_radius) = if v_norm == 0.0 {
        (lam_min, 1.0)
    } else {
        (0.5 * lam_min, (2.0 * v_norm / lam_min).max(1.0))
    };
    Ok((
        2.0,
        BoundConstants {
            upper,
            rho1: 2.0 * lam_min,
            far,
            far_radius,
        },
    ))
}

/// `C₀` of the lower remainder bound; case (i) for `r ≥ 2`, otherwise case
/// (ii), which needs `ε|a| ≤ c_a`.
pub fn lower_bound_constant(r: f64, eps_a: f64, c_a: f64) -> Result<f64> {
    if r >= 2.0 {
        let exp = r - 2.0 + (0.5 * (r - 4.0)).max(0.0);
        Ok(1.0 / (2f64.powf(exp) * r * (r - 1.0)))
    } else {
        bounded_lower_constant(r, eps_a, c_a)
    }
}

fn bounded_lower_constant(r: f64, eps_a: f64, c_a: f64) -> Result<f64> {
    if r > 2.0 {
        return Err(Error::HypothesisViolation(format!(
            "the bounded-centre constant needs r <= 2, got {r}"
        )));
    }
    if eps_a <= c_a {
        Ok(1.0 / (2.0 * (2.0 * (1.0 + c_a * c_a)).powf(0.5 * (2.0 - r))))
    } else {
        Err(Error::HypothesisViolation(format!(
            "r = {r} <= 2 requires eps_V |a| = {eps_a} <= C_a = {c_a}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperMargins {
    /// Against `C ε³ |x|² ⟨εx⟩^(r-2)`.
    pub grad_a: f64,
    /// Against the sharper `C ε³ |x|² ⟨εx⟩^max(r-3, 0)` (same margin when `r < 2`).
    pub grad_a_sharp: f64,
    pub rv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMargins {
    pub maxmin_low: f64,
    pub maxmin_high: f64,
    pub convexity: f64,
    pub norm_equiv_low: f64,
    pub norm_equiv_high: f64,
}

/// Extremal excess of `(1 + y²⟨y⟩^(r-2)) / ⟨y⟩^r` over 1, attained at
/// `⟨y⟩ = (r/2)^(1/(r-2))`.
pub fn norm_equiv_constant(r: f64) -> f64 {
    if r == 2.0 {
        0.0
    } else {
        (2.0 - r) / r * (2.0 / r).powf(2.0 / (r - 2.0))
    }
}

/// Margins of the scalar inequalities used to compare weights:
/// `2^-max(0,(2-b)/2) ≤ (1+y²)^(b/2) / (1+|y|^b) ≤ 2^max(0,(b-2)/2)`,
/// `|1+y|^r - 1 - r y ≥ 2^(2-r) |y|^r` (needs `r ≥ 2`), and the two-sided
/// bound on `(1 + y²⟨y⟩^(r-2)) / ⟨y⟩^r`. The convexity margin is `NaN` when
/// `r < 2`; use [`convexity_margin`] to get an error instead.
pub fn scalar_lemma_margins(y: f64, b: f64, r: f64) -> Result<ScalarMargins> {
    if !(b >= 0.0) {
        return Err(Error::HypothesisViolation(format!("exponent b = {b} must be >= 0")));
    }
    if !(r > 0.0) {
        return Err(Error::HypothesisViolation(format!("growth rate r = {r} must be > 0")));
    }
    let ratio = (1.0 + y * y).powf(0.5 * b) / (1.0 + y.abs().powf(b));
    let low = 2f64.powf(-(0.5 * (2.0 - b)).max(0.0));
    let high = 2f64.powf((0.5 * (b - 2.0)).max(0.0));
    let convexity = if r >= 2.0 { convexity_margin(y, r)? } else { f64::NAN };
    let br = bracket(y * y);
    let q = (1.0 + y * y * br.powf(r - 2.0)) / br.powf(r);
    let c = norm_equiv_constant(r);
    Ok(ScalarMargins {
        maxmin_low: ratio - low,
        maxmin_high: high - ratio,
        convexity,
        norm_equiv_low: q - (1.0 + c.min(0.0)),
        norm_equiv_high: (1.0 + c.max(0.0)) - q,
    })
}

pub fn convexity_margin(y: f64, r: f64) -> Result<f64> {
    if !(r >= 2.0) {
        return Err(Error::HypothesisViolation(format!("convexity bound needs r >= 2, got {r}")));
    }
    Ok((1.0 + y).abs().powf(r) - 1.0 - r * y - 2f64.powf(2.0 - r) * y.abs().powf(r))
}
