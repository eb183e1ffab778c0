//! Exact moving solitary waves in quadratic potentials. For
//! `V(x) = x·A·x + v·x + c` the remainder `R_V(y) = y·A·y` does not depend on
//! the centre, so `S_{σ(t)} η̃` solves the full equation whenever `η̃` solves
//! the confined profile equation and `σ(t)` follows the Newtonian flow.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{apply_symmetry, ComplexField, Grid, SymmetryParams, C64};
use crate::modulation::{newtonian_rhs, rk4_integrate, ClassicalState};
use crate::nonlinearity::Nonlinearity;
use crate::potential::PotentialSpec;
use crate::profile::{solved_profile, SolitonProfile, SolvedFamily, SolverOptions};
use crate::propagator::{EvolutionState, Propagator, PropagatorConfig};

/// Profile of `-Δη̃ + μη̃ - f(η̃) + (y·A·y) η̃ = 0`.
#[derive(Debug, Clone)]
pub struct ConfinedProfile {
    pub profile: Arc<SolitonProfile>,
    /// Grid samples of `y·A·y`.
    pub confinement: Vec<f64>,
}

impl ConfinedProfile {
    pub fn mu(&self) -> f64 {
        self.profile.mu
    }

    pub fn residual(&self) -> f64 {
        self.profile.residual
    }
}

/// `y·A·y` on the grid for a quadratic potential, i.e. `R_V(·, a)` for any `a`.
pub fn confinement_samples(v: &PotentialSpec, grid: &Grid) -> Result<Vec<f64>> {
    if !v.is_quadratic() && !v.is_zero() {
        return Err(Error::InvalidParameter(
            "exact solitary waves need a quadratic potential".into(),
        ));
    }
    Ok(v.sample_rv(grid, &vec![0.0; grid.dim()]))
}

pub fn solve_confined_profile(
    f: &Nonlinearity,
    mu: f64,
    v: &PotentialSpec,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<ConfinedProfile> {
    let confinement = confinement_samples(v, grid)?;
    let extra = (!v.is_zero()).then_some(confinement.as_slice());
    let profile = solved_profile(f, grid, mu, extra, None, opts)?;
    Ok(ConfinedProfile {
        profile: Arc::new(profile),
        confinement,
    })
}

/// The family of confined profiles, for decomposing fields against it.
pub fn confined_family(f: &Nonlinearity, v: &PotentialSpec, grid: &Grid) -> Result<SolvedFamily> {
    let q = confinement_samples(v, grid)?;
    SolvedFamily::new(grid, f.clone())?.with_confinement(q)
}

/// Newtonian trajectory `ȧ = 2p`, `ṗ = -∇V(a)`, `γ̇ = p² + μ - V(a)`, `μ̇ = 0` by RK4.
pub fn exact_trajectory(
    initial: &ClassicalState,
    v: &PotentialSpec,
    duration: f64,
    dt: f64,
) -> Result<Vec<(f64, ClassicalState)>> {
    if !v.is_quadratic() && !v.is_zero() {
        return Err(Error::InvalidParameter(
            "exact solitary waves need a quadratic potential".into(),
        ));
    }
    rk4_integrate(|s| newtonian_rhs(s, v), initial, duration, dt)
}

/// `S_σ η̃`
pub fn exact_field(profile: &SolitonProfile, state: &ClassicalState) -> Result<ComplexField> {
    let s = SymmetryParams::new(state.a.clone(), state.p.clone(), state.gamma)?;
    apply_symmetry(&s, &profile.eta_field())
}

#[derive(Debug, Clone)]
pub struct ExactComparison {
    pub sup_l2_error: f64,
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    pub trajectory: Vec<ClassicalState>,
    pub states: Vec<EvolutionState>,
}

/// Evolves `S_{σ₀} η̃` with the split-step scheme and measures the `L²`
/// distance to the exact solution at every output time. The classical
/// trajectory is integrated with the propagator's time step.
pub fn compare_with_pde(
    profile: &ConfinedProfile,
    v: &PotentialSpec,
    f: &Nonlinearity,
    initial: &ClassicalState,
    duration: f64,
    config: PropagatorConfig,
) -> Result<ExactComparison> {
    let eta = &profile.profile;
    let grid = &eta.grid;
    if (initial.mu - eta.mu).abs() > 1e-12 * eta.mu {
        return Err(Error::InvalidParameter(format!(
            "initial frequency {} differs from the profile's {}",
            initial.mu, eta.mu
        )));
    }
    let trajectory = exact_trajectory(initial, v, duration, config.dt)?;
    let propagator = Propagator::new(grid, v, f, config)?;
    let psi0 = exact_field(eta, initial)?;
    let mut times = Vec::new();
    let mut errors = Vec::new();
    let mut path = Vec::new();
    let mut states = Vec::new();
    let mut k = 0;
    propagator.evolve_with(&psi0, duration, |state| {
        let classical = &trajectory[k * config.output_stride].1;
        let exact = exact_field(eta, classical)?;
        errors.push(state.psi.sub(&exact)?.norm_l2());
        times.push(state.t);
        path.push(classical.clone());
        states.push(state.clone());
        k += 1;
        Ok(())
    })?;
    let sup_l2_error = errors.iter().cloned().fold(0.0, f64::max);
    Ok(ExactComparison {
        sup_l2_error,
        times,
        errors,
        trajectory: path,
        states,
    })
}

/// Residual `‖i ∂_t ψ - (-Δψ + Vψ - f(ψ))‖` of the exact family at time `t`,
/// with `∂_t` by a centered difference of step `h` along the classical flow.
pub fn exact_family_residual(
    profile: &SolitonProfile,
    v: &PotentialSpec,
    f: &Nonlinearity,
    state: &ClassicalState,
    h: f64,
) -> Result<f64> {
    let grid = &profile.grid;
    let fwd = exact_trajectory(state, v, h, h / 4.0)?;
    let back = exact_trajectory(state, v, -h, h / 4.0)?;
    let plus = exact_field(profile, &fwd.last().expect("nonempty").1)?;
    let minus = exact_field(profile, &back.last().expect("nonempty").1)?;
    let psi = exact_field(profile, state)?;
    let lap = grid.laplacian(psi.values());
    let vs = v.sample(grid);
    let g = f.multiplier(grid, psi.values());
    let hd = grid.cell_volume();
    let sum: f64 = (0..grid.len())
        .map(|i| {
            let dt = (plus.values()[i] - minus.values()[i]) / (2.0 * h);
            let lhs = C64::i() * dt;
            let rhs = -lap[i] + psi.values()[i] * (vs[i] - g[i]);
            (lhs - rhs).norm_sqr()
        })
        .sum();
    Ok((hd * sum).sqrt())
}
