//! Dynamics of the modulation parameters: the exact equations forced by
//! orthogonality of `w`, the point-particle limit, the residual coefficients
//! `α`, and a classical RK4 integrator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::{DecompositionResult, ModulationState};
use crate::error::{Error, Result};
use crate::grid::{ComplexField, C64};
use crate::linalg::solve_checked;
use crate::nonlinearity::Nonlinearity;
use crate::potential::PotentialSpec;
use crate::profile::SolitonProfile;

/// Defects of the modulation equations against the Newtonian ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCoefficients {
    /// `ȧ - 2p`
    pub trans: Vec<f64>,
    /// `-ṗ - ∇V(a)`
    pub boost: Vec<f64>,
    /// `μ - p² + ȧ·p - V(a) - γ̇`
    pub gauge: f64,
    /// `-μ̇`
    pub scale: f64,
}

impl AlphaCoefficients {
    pub fn zero(dim: usize) -> Self {
        Self {
            trans: vec![0.0; dim],
            boost: vec![0.0; dim],
            gauge: 0.0,
            scale: 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.trans
            .iter()
            .chain(&self.boost)
            .chain([&self.gauge, &self.scale])
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn from_rates(state: &ClassicalState, rate: &ClassicalState, v: &PotentialSpec) -> Self {
        let d = state.a.len();
        let grad = v.grad_v(&state.a);
        let p2: f64 = state.p.iter().map(|x| x * x).sum();
        let adot_p: f64 = rate.a.iter().zip(&state.p).map(|(x, y)| x * y).sum();
        Self {
            trans: (0..d).map(|j| rate.a[j] - 2.0 * state.p[j]).collect(),
            boost: (0..d).map(|j| -rate.p[j] - grad[j]).collect(),
            gauge: state.mu - p2 + adot_p - v.eval_v(&state.a) - rate.gamma,
            scale: -rate.mu,
        }
    }
}

/// Modulation parameters as plain numbers, with `γ` unwrapped. Also used
/// for time derivatives of the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    pub gamma: f64,
    pub mu: f64,
}

impl ClassicalState {
    pub fn new(a: Vec<f64>, p: Vec<f64>, gamma: f64, mu: f64) -> Self {
        Self { a, p, gamma, mu }
    }

    pub fn from_modulation(sigma: &ModulationState, gamma_unwrapped: f64) -> Self {
        Self {
            a: sigma.a.clone(),
            p: sigma.p.clone(),
            gamma: gamma_unwrapped,
            mu: sigma.mu,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    fn axpy(&self, c: f64, other: &Self) -> Self {
        Self {
            a: self.a.iter().zip(&other.a).map(|(x, y)| x + c * y).collect(),
            p: self.p.iter().zip(&other.p).map(|(x, y)| x + c * y).collect(),
            gamma: self.gamma + c * other.gamma,
            mu: self.mu + c * other.mu,
        }
    }

    fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.p).all(|v| v.is_finite()) && self.gamma.is_finite() && self.mu.is_finite()
    }
}

/// `h(a, p) = ½(|p|² + V(a))`
pub fn classical_energy(state: &ClassicalState, v: &PotentialSpec) -> f64 {
    0.5 * (state.p.iter().map(|x| x * x).sum::<f64>() + v.eval_v(&state.a))
}

/// `ȧ = 2p`, `ṗ = -∇V(a)`, `γ̇ = μ - V(a) + p²`, `μ̇ = 0`.
pub fn newtonian_rhs(state: &ClassicalState, v: &PotentialSpec) -> ClassicalState {
    let grad = v.grad_v(&state.a);
    point_particle_rhs(state, v, grad)
}

/// As [`newtonian_rhs`] with the force `-∇V_eff(a)` averaged over the profile.
pub fn effective_rhs(state: &ClassicalState, profile: &SolitonProfile, v: &PotentialSpec) -> ClassicalState {
    let grad = v.effective_gradient(profile, &state.a);
    point_particle_rhs(state, v, grad)
}

fn point_particle_rhs(state: &ClassicalState, v: &PotentialSpec, grad: Vec<f64>) -> ClassicalState {
    let p2: f64 = state.p.iter().map(|x| x * x).sum();
    ClassicalState {
        a: state.p.iter().map(|x| 2.0 * x).collect(),
        p: grad.into_iter().map(|g| -g).collect(),
        gamma: state.mu - v.eval_v(&state.a) + p2,
        mu: 0.0,
    }
}

/// Classical RK4 over `duration` (negative to run backwards) with step `|dt|`.
/// Returns the initial state followed by one state per step.
pub fn rk4_integrate(
    rhs: impl Fn(&ClassicalState) -> ClassicalState,
    initial: &ClassicalState,
    duration: f64,
    dt: f64,
) -> Result<Vec<(f64, ClassicalState)>> {
    if !(dt > 0.0 && dt.is_finite()) || !duration.is_finite() {
        return Err(Error::InvalidParameter(format!("step {dt}, duration {duration}")));
    }
    let steps = (duration.abs() / dt).round() as usize;
    let h = if steps == 0 { 0.0 } else { duration / steps as f64 };
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = initial.clone();
    out.push((0.0, y.clone()));
    for n in 1..=steps {
        let k1 = rhs(&y);
        let k2 = rhs(&y.axpy(0.5 * h, &k1));
        let k3 = rhs(&y.axpy(0.5 * h, &k2));
        let k4 = rhs(&y.axpy(h, &k3));
        y = y
            .axpy(h / 6.0, &k1)
            .axpy(h / 3.0, &k2)
            .axpy(h / 3.0, &k3)
            .axpy(h / 6.0, &k4);
        if !y.is_finite() {
            return Err(Error::NonFinite("classical trajectory"));
        }
        out.push((n as f64 * h, y.clone()));
    }
    Ok(out)
}

/// Parameter velocities and the `α` they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationRates {
    pub rate: ClassicalState,
    pub alpha: AlphaCoefficients,
}

/// The dual directions `η, x_j η, i∂_j η, i∂_μ η` and their μ-derivatives.
struct DualBasis {
    fields: Vec<Vec<C64>>,
    d_mu: Vec<Vec<C64>>,
}

fn dual_basis(profile: &SolitonProfile) -> DualBasis {
    let grid = &profile.grid;
    let d = grid.dim();
    let re = |v: &[f64]| v.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>();
    let im = |v: &[f64]| v.iter().map(|&x| C64::new(0.0, x)).collect::<Vec<_>>();
    let mut fields = vec![re(&profile.eta)];
    let mut d_mu = vec![re(&profile.d_mu_eta)];
    for ax in 0..d {
        let x = grid.coordinate_field(ax);
        fields.push(re(&x.iter().zip(&profile.eta).map(|(x, e)| x * e).collect::<Vec<_>>()));
        d_mu.push(re(&x.iter().zip(&profile.d_mu_eta).map(|(x, e)| x * e).collect::<Vec<_>>()));
    }
    for ax in 0..d {
        fields.push(im(&profile.gradient[ax]));
        d_mu.push(im(&grid.derivative_real(&profile.d_mu_eta, ax, 1)));
    }
    fields.push(im(&profile.d_mu_eta));
    d_mu.push(im(&profile.d2_mu_eta));
    DualBasis { fields, d_mu }
}

/// Generators `K u` in the order `∂_j u`, `i x_j u`, `i u`.
fn generators(u: &ComplexField) -> Vec<Vec<C64>> {
    let grid = u.grid();
    let d = grid.dim();
    let mut out: Vec<Vec<C64>> = (0..d).map(|ax| grid.derivative(u.values(), ax, 1)).collect();
    for ax in 0..d {
        let x = grid.coordinate_field(ax);
        out.push(u.values().iter().zip(&x).map(|(v, x)| v * C64::new(0.0, *x)).collect());
    }
    out.push(u.values().iter().map(|v| v * C64::i()).collect());
    out
}

/// `⟨u, v⟩ = Re ∫ u conj(v)`
fn real_pairing(grid: &crate::grid::Grid, u: &[C64], v: &[C64]) -> f64 {
    grid.pairing(u, v).re
}

/// `L w + N(w) + R_V (η + w)` in the moving frame.
fn nonlinear_drive(
    profile: &SolitonProfile,
    w: &ComplexField,
    a: &[f64],
    v: &PotentialSpec,
    f: &Nonlinearity,
) -> Result<(ComplexField, Vec<C64>)> {
    let grid = &profile.grid;
    let lw = f.linearized_apply(&profile.eta, profile.mu, w)?;
    let nw = f.remainder_n(&profile.eta, w)?;
    let u: Vec<C64> = w.values().iter().zip(&profile.eta).map(|(x, e)| x + e).collect();
    let rv = v.sample_rv(grid, a);
    let drive: Vec<C64> = lw
        .values()
        .iter()
        .zip(nw.values())
        .zip(u.iter().zip(&rv))
        .map(|((l, n), (u, r))| l + n + u * r)
        .collect();
    Ok((ComplexField::new(grid, u.clone())?, drive))
}

/// Solves the linear system for `(α, μ̇)` obtained by differentiating the
/// orthogonality conditions along the flow, then recovers `σ̇`.
pub fn full_modulation_rhs(
    sigma: &ModulationState,
    w: &ComplexField,
    profile: &SolitonProfile,
    v: &PotentialSpec,
    f: &Nonlinearity,
) -> Result<ModulationRates> {
    let grid = &profile.grid;
    if !w.grid().is_compatible(grid) {
        return Err(Error::GridMismatch);
    }
    let d = grid.dim();
    let n = 2 * d + 2;
    let basis = dual_basis(profile);
    let (u, drive) = nonlinear_drive(profile, w, &sigma.a, v, f)?;
    let i_drive: Vec<C64> = drive.iter().map(|x| x * C64::i()).collect();
    let ku = generators(&u);
    let mut m = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for (row, (c, dc)) in basis.fields.iter().zip(&basis.d_mu).enumerate() {
        for (col, k) in ku.iter().enumerate() {
            m[(row, col)] = real_pairing(grid, k, c);
        }
        let d_eta: Vec<C64> = profile.d_mu_eta.iter().map(|&x| C64::new(x, 0.0)).collect();
        m[(row, n - 1)] = real_pairing(grid, w.values(), dc) - real_pairing(grid, &d_eta, c);
        rhs[row] = real_pairing(grid, &i_drive, c);
    }
    let y = solve_checked(m, rhs, 1e12)?;
    let alpha = AlphaCoefficients {
        trans: y.as_slice()[..d].to_vec(),
        boost: y.as_slice()[d..2 * d].to_vec(),
        gauge: y[2 * d],
        scale: -y[2 * d + 1],
    };
    let grad = v.grad_v(&sigma.a);
    let a_dot: Vec<f64> = (0..d).map(|j| alpha.trans[j] + 2.0 * sigma.p[j]).collect();
    let p_dot: Vec<f64> = (0..d).map(|j| -alpha.boost[j] - grad[j]).collect();
    let p2: f64 = sigma.p.iter().map(|x| x * x).sum();
    let adot_p: f64 = a_dot.iter().zip(&sigma.p).map(|(x, y)| x * y).sum();
    let gamma_dot = sigma.mu - p2 + adot_p - v.eval_v(&sigma.a) - alpha.gauge;
    Ok(ModulationRates {
        rate: ClassicalState {
            a: a_dot,
            p: p_dot,
            gamma: gamma_dot,
            mu: -alpha.scale,
        },
        alpha,
    })
}

/// Fourth-order finite-difference derivative of uniformly spaced samples,
/// one-sided at the two points nearest each end.
pub fn derivative_series(values: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 5 {
        return Err(Error::SeriesTooShort(n));
    }
    let f = values;
    let c = 1.0 / (12.0 * h);
    Ok((0..n)
        .map(|i| match i {
            0 => c * (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]),
            1 => c * (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]),
            i if i == n - 2 => {
                -c * (-3.0 * f[n - 1] - 10.0 * f[n - 2] + 18.0 * f[n - 3] - 6.0 * f[n - 4] + f[n - 5])
            }
            i if i == n - 1 => {
                -c * (-25.0 * f[n - 1] + 48.0 * f[n - 2] - 36.0 * f[n - 3] + 16.0 * f[n - 4] - 3.0 * f[n - 5])
            }
            i => c * (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]),
        })
        .collect())
}

/// Parameter velocities of a uniformly sampled series.
pub fn rates_from_series(times: &[f64], states: &[ClassicalState]) -> Result<Vec<ClassicalState>> {
    if times.len() != states.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: states.len(),
        });
    }
    let n = states.len();
    if n < 5 {
        return Err(Error::SeriesTooShort(n));
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    let uniform = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs());
    if !uniform || !(h > 0.0) {
        return Err(Error::InvalidParameter("series is not uniformly sampled".into()));
    }
    let d = states[0].dim();
    let column = |pick: &dyn Fn(&ClassicalState) -> f64| -> Result<Vec<f64>> {
        derivative_series(&states.iter().map(pick).collect::<Vec<_>>(), h)
    };
    let a: Vec<Vec<f64>> = (0..d).map(|j| column(&|s| s.a[j])).collect::<Result<_>>()?;
    let p: Vec<Vec<f64>> = (0..d).map(|j| column(&|s| s.p[j])).collect::<Result<_>>()?;
    let gamma = column(&|s| s.gamma)?;
    let mu = column(&|s| s.mu)?;
    Ok((0..n)
        .map(|i| ClassicalState {
            a: a.iter().map(|c| c[i]).collect(),
            p: p.iter().map(|c| c[i]).collect(),
            gamma: gamma[i],
            mu: mu[i],
        })
        .collect())
}

/// `α` along a uniformly sampled series with unwrapped phase.
pub fn alpha_from_series(
    times: &[f64],
    states: &[ClassicalState],
    v: &PotentialSpec,
) -> Result<Vec<AlphaCoefficients>> {
    let rates = rates_from_series(times, states)?;
    Ok(states
        .iter()
        .zip(&rates)
        .map(|(s, r)| AlphaCoefficients::from_rates(s, r, v))
        .collect())
}

/// Right-hand side of the equation for `w`,
/// `L w + N(w) + R_V(η + w) + i(α·K)(η + w) - iμ̇ ∂_μ η`.
pub fn perturbation_rhs(
    result: &DecompositionResult,
    alpha: &AlphaCoefficients,
    v: &PotentialSpec,
    f: &Nonlinearity,
) -> Result<Vec<C64>> {
    let profile = &result.profile;
    let (u, mut out) = nonlinear_drive(profile, &result.w, &result.sigma.a, v, f)?;
    let coeffs: Vec<f64> = alpha
        .trans
        .iter()
        .chain(&alpha.boost)
        .chain([&alpha.gauge])
        .cloned()
        .collect();
    for (c, k) in coeffs.iter().zip(generators(&u)) {
        out.iter_mut().zip(&k).for_each(|(o, k)| *o += C64::i() * c * k);
    }
    // -i μ̇ ∂_μη with μ̇ = -α_scale
    out.iter_mut()
        .zip(&profile.d_mu_eta)
        .for_each(|(o, e)| *o += C64::new(0.0, alpha.scale * e));
    Ok(out)
}

/// `‖i(w₁ - w₀)/Δt - ½(F₀ + F₁)‖`, where `F` is [`perturbation_rhs`].
pub fn perturbation_residual(
    first: &DecompositionResult,
    second: &DecompositionResult,
    alpha_first: &AlphaCoefficients,
    alpha_second: &AlphaCoefficients,
    dt: f64,
    v: &PotentialSpec,
    f: &Nonlinearity,
) -> Result<f64> {
    let grid = first.w.grid();
    if !grid.is_compatible(second.w.grid()) {
        return Err(Error::GridMismatch);
    }
    let f0 = perturbation_rhs(first, alpha_first, v, f)?;
    let f1 = perturbation_rhs(second, alpha_second, v, f)?;
    let hd = grid.cell_volume();
    let sum: f64 = first
        .w
        .values()
        .iter()
        .zip(second.w.values())
        .zip(f0.iter().zip(&f1))
        .map(|((w0, w1), (a, b))| (C64::i() * (w1 - w0) / dt - 0.5 * (a + b)).norm_sqr())
        .sum();
    Ok((hd * sum).sqrt())
}
