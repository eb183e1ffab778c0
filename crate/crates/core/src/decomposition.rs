//! Splitting `ψ = S_σ(η_μ + w)` with `w` symplectically orthogonal to the
//! tangent space of the soliton family, by Newton iteration on the
//! orthogonality conditions.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{boost_in_place, norms, wrap_phase, ComplexField, FieldNorms, Grid, SymmetryParams, C64};
use crate::linalg::condition_number;
use crate::profile::{ProfileFamily, SolitonProfile};
use crate::propagator::EvolutionState;

/// Position, momentum, phase and frequency of a point on the soliton family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationState {
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    gamma: f64,
    pub mu: f64,
}

impl ModulationState {
    pub fn new(a: Vec<f64>, p: Vec<f64>, gamma: f64, mu: f64) -> Result<Self> {
        if a.len() != p.len() || a.is_empty() || a.len() > 2 {
            return Err(Error::InvalidParameter(format!(
                "position has {} components and momentum {}",
                a.len(),
                p.len()
            )));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("frequency {mu}")));
        }
        if a.iter().chain(&p).any(|v| !v.is_finite()) || !gamma.is_finite() {
            return Err(Error::NonFinite("modulation parameters"));
        }
        Ok(Self {
            a,
            p,
            gamma: wrap_phase(gamma),
            mu,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Phase in `[0, 2π)`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) {
        self.gamma = wrap_phase(gamma);
    }

    pub fn symmetry(&self) -> SymmetryParams {
        SymmetryParams::new(self.a.clone(), self.p.clone(), self.gamma)
            .expect("modulation state holds valid symmetry parameters")
    }

    /// Flattened as `[a, p, γ, μ]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.a.clone();
        v.extend(&self.p);
        v.push(self.gamma);
        v.push(self.mu);
        v
    }

    fn shifted(&self, delta: &[f64]) -> Self {
        let d = self.dim();
        Self {
            a: (0..d).map(|j| self.a[j] + delta[j]).collect(),
            p: (0..d).map(|j| self.p[j] + delta[d + j]).collect(),
            gamma: wrap_phase(self.gamma + delta[2 * d]),
            mu: self.mu + delta[2 * d + 1],
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub sigma: ModulationState,
    /// `S_σ⁻¹ψ - η_μ`
    pub w: ComplexField,
    /// `[⟨Re w, η⟩, ⟨Re w, x_j η⟩, ⟨Im w, ∂_j η⟩, ⟨Im w, ∂_μ η⟩]`
    pub ortho_residuals: Vec<f64>,
    pub newton_iterations: usize,
    pub w_norms: FieldNorms,
    pub profile: Arc<SolitonProfile>,
}

/// One decomposed sample of a trajectory.
#[derive(Debug, Clone)]
pub struct TrackedPoint {
    pub t: f64,
    pub gamma_unwrapped: f64,
    pub result: DecompositionResult,
}

#[derive(Debug)]
pub struct TrackedSeries {
    pub points: Vec<TrackedPoint>,
    /// Index and cause of the first sample that could not be decomposed.
    pub failure: Option<(usize, Error)>,
}

pub struct Decomposer {
    family: Arc<dyn ProfileFamily>,
    tol_factor: f64,
    tube_factor: f64,
    max_iterations: usize,
    fd_step: f64,
    eps_v: f64,
    r: f64,
}

impl std::fmt::Debug for Decomposer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Decomposer")
            .field("tol_factor", &self.tol_factor)
            .field("tube_factor", &self.tube_factor)
            .field("max_iterations", &self.max_iterations)
            .finish()
    }
}

/// Spectrum of the field being decomposed, so each residual costs one inverse FFT.
struct Target {
    grid: Grid,
    spectrum: Vec<C64>,
}

impl Target {
    fn new(psi: &ComplexField) -> Self {
        Self {
            grid: psi.grid().clone(),
            spectrum: psi.grid().spectrum(psi.values()),
        }
    }

    /// `S_σ⁻¹ψ = e^{-ip·x - iγ} ψ(x + a)`
    fn moving_frame(&self, sigma: &ModulationState) -> Vec<C64> {
        let neg: Vec<f64> = sigma.a.iter().map(|v| -v).collect();
        let mut u = self.grid.translate_spectrum(&self.spectrum, &neg);
        boost_in_place(&self.grid, &mut u, &sigma.p, -sigma.gamma, -1.0);
        u
    }
}

fn conditions(profile: &SolitonProfile, u: &[C64]) -> Vec<f64> {
    let grid = &profile.grid;
    let d = grid.dim();
    let hd = grid.cell_volume();
    let mut out = vec![0.0; 2 * d + 2];
    for (i, (v, e)) in u.iter().zip(&profile.eta).enumerate() {
        let wr = v.re - e;
        let wi = v.im;
        let x = grid.point(i);
        out[0] += wr * e;
        for j in 0..d {
            out[1 + j] += wr * x[j] * e;
            out[1 + d + j] += wi * profile.gradient[j][i];
        }
        out[2 * d + 1] += wi * profile.d_mu_eta[i];
    }
    out.iter_mut().for_each(|v| *v *= hd);
    out
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Leading part of the Jacobian of the orthogonality conditions in `[a, p, γ, μ]`
/// at `w = 0`, `p = 0`.
pub fn leading_jacobian(dim: usize, mass: f64, mass_slope: f64) -> DMatrix<f64> {
    let n = 2 * dim + 2;
    let mut m = DMatrix::zeros(n, n);
    m[(0, n - 1)] = -mass_slope;
    for j in 0..dim {
        m[(1 + j, j)] = -mass;
        m[(1 + dim + j, dim + j)] = mass;
    }
    m[(n - 1, 2 * dim)] = -mass_slope;
    m
}

impl Decomposer {
    pub fn new(family: Arc<dyn ProfileFamily>) -> Self {
        Self {
            family,
            tol_factor: 1e-12,
            tube_factor: 0.2,
            max_iterations: 50,
            fd_step: 1e-6,
            eps_v: 1.0,
            r: 2.0,
        }
    }

    /// Residual tolerance relative to `‖η_μ‖²`.
    pub fn with_tolerance(mut self, tol_factor: f64) -> Self {
        self.tol_factor = tol_factor;
        self
    }

    /// Tube radius relative to `‖η_μ‖`.
    pub fn with_tube(mut self, tube_factor: f64) -> Self {
        self.tube_factor = tube_factor;
        self
    }

    /// Weights used when reporting the norms of `w`.
    pub fn with_norm_weights(mut self, eps_v: f64, r: f64) -> Self {
        self.eps_v = eps_v;
        self.r = r;
        self
    }

    pub fn family(&self) -> &Arc<dyn ProfileFamily> {
        &self.family
    }

    /// Centroid, mean momentum, mass-matched frequency and best-fit phase.
    pub fn initial_guess(&self, psi: &ComplexField) -> Result<ModulationState> {
        let grid = psi.grid();
        if !grid.is_compatible(self.family.grid()) {
            return Err(Error::GridMismatch);
        }
        let d = grid.dim();
        let hd = grid.cell_volume();
        let dens: Vec<f64> = psi.values().iter().map(|v| v.norm_sqr()).collect();
        let total = hd * dens.iter().sum::<f64>();
        if !(total > 0.0) {
            return Err(Error::CollapseToZero { norm: total.sqrt() });
        }
        let mass = 0.5 * total;
        let a: Vec<f64> = (0..d)
            .map(|ax| {
                hd * dens
                    .iter()
                    .enumerate()
                    .map(|(i, r)| grid.coordinate(i, ax) * r)
                    .sum::<f64>()
                    / total
            })
            .collect();
        let p: Vec<f64> = momentum(psi).into_iter().map(|m| m / mass).collect();
        let mu = self.family.frequency_for_mass(mass)?;
        let profile = self.family.profile(mu)?;
        let mut reference = profile.eta_field().into_values();
        boost_in_place(grid, &mut reference, &p, 0.0, 1.0);
        let reference = grid.translate(&reference, &a);
        let overlap = grid.pairing(psi.values(), &reference);
        ModulationState::new(a, p, overlap.arg(), mu)
    }

    /// The `2d + 2` orthogonality conditions of `S_σ⁻¹ψ - η_μ`.
    pub fn residuals(&self, psi: &ComplexField, sigma: &ModulationState) -> Result<Vec<f64>> {
        let profile = self.family.profile(sigma.mu)?;
        Ok(conditions(&profile, &Target::new(psi).moving_frame(sigma)))
    }

    fn residuals_at(&self, target: &Target, sigma: &ModulationState) -> Result<Vec<f64>> {
        let profile = self.family.profile(sigma.mu)?;
        Ok(conditions(&profile, &target.moving_frame(sigma)))
    }

    /// Forward-difference Jacobian of the conditions in `[a, p, γ, μ]`.
    pub fn jacobian(&self, psi: &ComplexField, sigma: &ModulationState) -> Result<DMatrix<f64>> {
        let target = Target::new(psi);
        let base = self.residuals_at(&target, sigma)?;
        self.jacobian_at(&target, sigma, &base)
    }

    fn jacobian_at(&self, target: &Target, sigma: &ModulationState, base: &[f64]) -> Result<DMatrix<f64>> {
        let n = base.len();
        let mut jac = DMatrix::zeros(n, n);
        for col in 0..n {
            let mut delta = vec![0.0; n];
            delta[col] = self.fd_step;
            let g = self.residuals_at(target, &sigma.shifted(&delta))?;
            for row in 0..n {
                jac[(row, col)] = (g[row] - base[row]) / self.fd_step;
            }
        }
        Ok(jac)
    }

    fn check_frequency(&self, mu: f64) -> Result<()> {
        let iv = self.family.admissible();
        if !iv.contains(mu) || !mu.is_finite() {
            return Err(Error::FrequencyOutOfRange {
                mu,
                low: iv.low,
                high: iv.high,
            });
        }
        Ok(())
    }

    pub fn decompose(&self, psi: &ComplexField, guess: &ModulationState) -> Result<DecompositionResult> {
        if !psi.grid().is_compatible(self.family.grid()) {
            return Err(Error::GridMismatch);
        }
        if guess.dim() != psi.grid().dim() {
            return Err(Error::InvalidParameter(format!(
                "{}-dimensional guess on a {}-dimensional grid",
                guess.dim(),
                psi.grid().dim()
            )));
        }
        let target = Target::new(psi);
        let grid = psi.grid();
        let mut sigma = guess.clone();
        for iteration in 0..=self.max_iterations {
            self.check_frequency(sigma.mu)?;
            let profile = self.family.profile(sigma.mu)?;
            let u = target.moving_frame(&sigma);
            let g = conditions(&profile, &u);
            let w: Vec<C64> = u.iter().zip(&profile.eta).map(|(v, e)| v - e).collect();
            let norm_eta = profile.norm();
            let w_l2 = (grid.cell_volume() * w.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt();
            if !(w_l2 <= self.tube_factor * norm_eta) {
                return Err(Error::OutOfTube(format!(
                    "‖w‖ = {w_l2:.3e} exceeds {:.3e} after {iteration} iterations",
                    self.tube_factor * norm_eta
                )));
            }
            let tol = self.tol_factor * norm_eta * norm_eta;
            if max_abs(&g) <= tol {
                let w = ComplexField::new(grid, w)?;
                let w_norms = norms(&w, self.eps_v, self.r)?;
                return Ok(DecompositionResult {
                    sigma,
                    w,
                    ortho_residuals: g,
                    newton_iterations: iteration,
                    w_norms,
                    profile,
                });
            }
            if iteration == self.max_iterations {
                break;
            }
            let jac = self.jacobian_at(&target, &sigma, &g)?;
            let jac = if condition_number(&jac) <= 1e12 {
                jac
            } else {
                leading_jacobian(grid.dim(), profile.mass, profile.mass_slope)
            };
            let rhs = DVector::from_iterator(g.len(), g.iter().map(|v| -v));
            let step = jac
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::OutOfTube("singular Newton system".into()))?;
            if step.iter().any(|v| !v.is_finite()) {
                return Err(Error::OutOfTube("non-finite Newton step".into()));
            }
            sigma = sigma.shifted(step.as_slice());
        }
        Err(Error::MaxIterations(self.max_iterations))
    }

    /// Decomposes every state, warm-starting from the previous parameters
    /// (linearly extrapolated once two are available), falling back to a fresh
    /// guess when that leaves the tube. Stops at the first failure.
    pub fn track_series(&self, states: &[EvolutionState]) -> TrackedSeries {
        let mut tracker = self.tracker();
        let mut points = Vec::with_capacity(states.len());
        for (k, state) in states.iter().enumerate() {
            match tracker.push(state) {
                Ok(p) => points.push(p),
                Err(e) => {
                    return TrackedSeries {
                        points,
                        failure: Some((k, e)),
                    }
                }
            }
        }
        TrackedSeries {
            points,
            failure: None,
        }
    }

    pub fn tracker(&self) -> Tracker<'_> {
        Tracker {
            decomposer: self,
            recent: Vec::new(),
        }
    }
}

/// Streaming form of [`Decomposer::track_series`].
pub struct Tracker<'a> {
    decomposer: &'a Decomposer,
    recent: Vec<TrackedPoint>,
}

impl Tracker<'_> {
    pub fn push(&mut self, state: &EvolutionState) -> Result<TrackedPoint> {
        let guess = match self.recent.as_slice() {
            [] => self.decomposer.initial_guess(&state.psi)?,
            [only] => only.result.sigma.clone(),
            [.., p0, p1] => extrapolate(p0, p1, state.t),
        };
        let result = match self.decomposer.decompose(&state.psi, &guess) {
            Err(Error::OutOfTube(_) | Error::MaxIterations(_)) if !self.recent.is_empty() => {
                let cold = self.decomposer.initial_guess(&state.psi)?;
                self.decomposer.decompose(&state.psi, &cold)?
            }
            other => other?,
        };
        let gamma_unwrapped = match self.recent.last() {
            None => result.sigma.gamma(),
            Some(prev) => prev.gamma_unwrapped + phase_difference(result.sigma.gamma(), prev.result.sigma.gamma()),
        };
        let point = TrackedPoint {
            t: state.t,
            gamma_unwrapped,
            result,
        };
        if self.recent.len() == 2 {
            self.recent.remove(0);
        }
        self.recent.push(point.clone());
        Ok(point)
    }
}

/// `x - y` reduced to `(-π, π]`.
pub fn phase_difference(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

fn extrapolate(p0: &TrackedPoint, p1: &TrackedPoint, t: f64) -> ModulationState {
    let dt = p1.t - p0.t;
    if !(dt > 0.0) {
        return p1.result.sigma.clone();
    }
    let s = (t - p1.t) / dt;
    let (a, b) = (&p0.result.sigma, &p1.result.sigma);
    let lerp = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(x, y)| y + s * (y - x)).collect() };
    ModulationState {
        a: lerp(&a.a, &b.a),
        p: lerp(&a.p, &b.p),
        gamma: wrap_phase(p1.gamma_unwrapped + s * (p1.gamma_unwrapped - p0.gamma_unwrapped)),
        mu: b.mu,
    }
}

/// `P(ψ) = ½ Im ∫ conj(ψ) ∇ψ`
pub fn momentum(psi: &ComplexField) -> Vec<f64> {
    let grid = psi.grid();
    (0..grid.dim())
        .map(|ax| {
            let dpsi = grid.derivative(psi.values(), ax, 1);
            0.5 * grid.pairing(&dpsi, psi.values()).im
        })
        .collect()
}
