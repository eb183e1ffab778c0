//! Perturbed initial data, streamed runs with on-the-fly decomposition, the
//! ε-scaling study and the exact-family comparison.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::{Decomposer, TrackedPoint, Tracker};
use crate::diagnostics::{hamiltonian_with, lyapunov, lyapunov_rate, mass_and_momentum};
use crate::error::{Error, Result};
use crate::exactfamily::{compare_with_pde, confined_family, solve_confined_profile};
use crate::grid::{apply_symmetry, norms, ComplexField, FieldNorms, Grid, C64};
use crate::harness::config::{ExperimentConfig, Perturbation};
use crate::harness::persistence::SeriesRow;
use crate::modulation::{
    alpha_from_series, classical_energy, full_modulation_rhs, AlphaCoefficients, ClassicalState,
};
use crate::nonlinearity::Nonlinearity;
use crate::potential::{BoundConstants, PotentialSpec};
use crate::profile::{ProfileFamily, SolitonProfile};
use crate::propagator::{EvolutionState, Propagator};

const NOISE_CUTOFF: f64 = 1.5;
const NOISE_ENVELOPE: f64 = 4.0;

/// Smooth random direction on the symplectic complement of the soliton
/// manifold at `profile`, with unit energy norm. Band-limited to
/// `|k| ≤ 1.5` and damped by a Gaussian envelope.
pub fn skew_orthogonal_noise(profile: &SolitonProfile, eps_v: f64, r: f64, seed: u64) -> Result<ComplexField> {
    let grid = &profile.grid;
    let d = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k: Vec<Vec<f64>> = (0..d).map(|ax| grid.wavevector_field(ax, false)).collect();
    let mut spec: Vec<C64> = (0..grid.len())
        .map(|i| {
            let k2: f64 = k.iter().map(|k| k[i] * k[i]).sum();
            let c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if k2 <= NOISE_CUTOFF * NOISE_CUTOFF {
                c
            } else {
                C64::default()
            }
        })
        .collect();
    grid.ifft(&mut spec);
    let envelope = grid
        .radius_squared_field()
        .into_iter()
        .map(|r2| (-0.5 * r2 / (NOISE_ENVELOPE * NOISE_ENVELOPE)).exp());
    let (mut re, mut im): (Vec<f64>, Vec<f64>) = spec.iter().zip(envelope).map(|(v, e)| (e * v.re, e * v.im)).unzip();

    let mut plus = vec![profile.eta.clone()];
    for ax in 0..d {
        let x = grid.coordinate_field(ax);
        plus.push(x.iter().zip(&profile.eta).map(|(x, e)| x * e).collect());
    }
    let mut minus = profile.gradient.clone();
    minus.push(profile.d_mu_eta.clone());
    project_out(grid, &mut re, plus);
    project_out(grid, &mut im, minus);

    let w = ComplexField::new(grid, re.iter().zip(&im).map(|(&a, &b)| C64::new(a, b)).collect())?;
    let size = norms(&w, eps_v, r)?.energy;
    if !(size > 0.0) {
        return Err(Error::CollapseToZero { norm: size });
    }
    Ok(w.scaled(C64::new(1.0 / size, 0.0)))
}

/// Removes the span of `dirs` from `u` in the real `L²` product.
fn project_out(grid: &Grid, u: &mut [f64], dirs: Vec<Vec<f64>>) {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut q in dirs {
        for b in &basis {
            let c = grid.dot(&q, b);
            q.iter_mut().zip(b).for_each(|(q, b)| *q -= c * b);
        }
        let n = grid.dot(&q, &q).sqrt();
        if n > 1e-12 {
            q.iter_mut().for_each(|q| *q /= n);
            basis.push(q);
        }
    }
    // Two passes for round-off.
    for _ in 0..2 {
        for b in &basis {
            let c = grid.dot(u, b);
            u.iter_mut().zip(b).for_each(|(u, b)| *u -= c * b);
        }
    }
}

/// `S_{σ₀}(η_μ + ε₀ ŵ)`
pub fn initial_field(config: &ExperimentConfig, profile: &SolitonProfile, v: &PotentialSpec) -> Result<ComplexField> {
    let sigma = config.initial_state()?;
    let mut u = profile.eta_field();
    if let Perturbation::SkewOrthogonalNoise { amplitude } = config.perturbation {
        let w = skew_orthogonal_noise(profile, v.eps_v(), v.growth_rate(), config.seed)?;
        u = u.add_scaled(C64::new(amplitude, 0.0), &w)?;
    }
    apply_symmetry(&sigma.symmetry(), &u)
}

/// Where the `α` columns come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlphaSource {
    /// Solve the modulation system at every sample.
    #[default]
    Modulation,
    /// Differentiate the decomposed parameter series.
    Series,
}

#[derive(Clone, Default)]
pub struct RunOptions {
    pub keep_states: bool,
    pub alpha: AlphaSource,
    /// Family to decompose against; defaults to the configuration's.
    pub family: Option<Arc<dyn ProfileFamily>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for FailureReport {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub eps: f64,
    pub eps_v: f64,
    pub eps0: f64,
    pub eps_h: f64,
    pub r: f64,
    pub constants: BoundConstants,
    pub profile_residual: f64,
    pub samples: usize,
    pub t_run: f64,
    /// Componentwise suprema of the norms of `w`.
    pub sup_w: FieldNorms,
    pub max_alpha: f64,
    pub sup_p: f64,
    /// `C_a`: the largest `ε_V|a|` seen, plus 10%.
    pub centre_bound: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub lambda_max: f64,
    /// `|Λ(T) - Λ(0) - ∫ dΛ/dt| / max|Λ|`, when the rates are available.
    pub lyapunov_defect: Option<f64>,
    /// `1 / (ε_V √ε_h + ε²)`
    pub horizon_scale: f64,
    pub horizon_ratio: f64,
    pub failure: Option<FailureReport>,
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub rows: Vec<SeriesRow>,
    /// `dΛ/dt` at each row; empty unless `α` comes from the modulation system.
    pub lambda_rate: Vec<f64>,
    pub states: Vec<EvolutionState>,
    pub points: Vec<TrackedPoint>,
    pub failure: Option<Error>,
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sup_norms(a: FieldNorms, b: FieldNorms) -> FieldNorms {
    FieldNorms {
        l2: a.l2.max(b.l2),
        h1: a.h1.max(b.h1),
        weighted: a.weighted.max(b.weighted),
        energy: a.energy.max(b.energy),
    }
}

/// Decomposes samples one at a time and turns each into a series row.
struct Recorder<'a> {
    tracker: Tracker<'a>,
    v: &'a PotentialSpec,
    f: &'a Nonlinearity,
    v_samples: Vec<f64>,
    options: &'a RunOptions,
    rows: Vec<SeriesRow>,
    lambda_rate: Vec<f64>,
    states: Vec<EvolutionState>,
    points: Vec<TrackedPoint>,
}

impl Recorder<'_> {
    fn record(&mut self, state: &EvolutionState) -> Result<()> {
        let (v, f) = (self.v, self.f);
        let point = self.tracker.push(state)?;
        let res = &point.result;
        let classical = ClassicalState::from_modulation(&res.sigma, point.gamma_unwrapped);
        let alpha = match self.options.alpha {
            AlphaSource::Modulation => {
                let rates = full_modulation_rhs(&res.sigma, &res.w, &res.profile, v, f)?;
                self.lambda_rate.push(lyapunov_rate(res, &rates.rate, v)?);
                rates.alpha
            }
            AlphaSource::Series => AlphaCoefficients::zero(v.dim()),
        };
        let mm = mass_and_momentum(&state.psi);
        self.rows.push(SeriesRow {
            t: state.t,
            a: res.sigma.a.clone(),
            p: res.sigma.p.clone(),
            gamma_wrapped: res.sigma.gamma(),
            gamma_unwrapped: point.gamma_unwrapped,
            mu: res.sigma.mu,
            alpha_trans: alpha.trans,
            alpha_boost: alpha.boost,
            alpha_gauge: alpha.gauge,
            alpha_scale: alpha.scale,
            w_l2: res.w_norms.l2,
            w_h1: res.w_norms.h1,
            w_weighted: res.w_norms.weighted,
            w_energy: res.w_norms.energy,
            mass: mm.mass,
            energy: hamiltonian_with(&state.psi, &self.v_samples, f),
            momentum: mm.momentum,
            h_classical: classical_energy(&classical, v),
            lambda: lyapunov(&res.profile, &res.w, &res.sigma.a, v, f)?,
        });
        if self.options.keep_states {
            self.states.push(state.clone());
            self.points.push(point);
        }
        Ok(())
    }

    fn finish(
        mut self,
        config: &ExperimentConfig,
        profile: &SolitonProfile,
        failure: Option<Error>,
    ) -> Result<RunOutput> {
        if self.options.alpha == AlphaSource::Series && self.rows.len() >= 5 {
            let times: Vec<f64> = self.rows.iter().map(|r| r.t).collect();
            let series: Vec<ClassicalState> = self
                .rows
                .iter()
                .map(|r| ClassicalState::new(r.a.clone(), r.p.clone(), r.gamma_unwrapped, r.mu))
                .collect();
            for (row, alpha) in self.rows.iter_mut().zip(alpha_from_series(&times, &series, self.v)?) {
                row.alpha_trans = alpha.trans;
                row.alpha_boost = alpha.boost;
                row.alpha_gauge = alpha.gauge;
                row.alpha_scale = alpha.scale;
            }
        }
        let summary = summarize(config, self.v, profile, &self.rows, &self.lambda_rate, failure.as_ref())?;
        Ok(RunOutput {
            summary,
            rows: self.rows,
            lambda_rate: self.lambda_rate,
            states: self.states,
            points: self.points,
            failure,
        })
    }
}

struct Setup {
    grid: Grid,
    v: PotentialSpec,
    profile: Arc<SolitonProfile>,
    decomposer: Decomposer,
}

fn setup(config: &ExperimentConfig, options: &RunOptions) -> Result<Setup> {
    config.validate()?;
    let grid = config.grid()?;
    let v = config.potential_spec()?;
    let family = match options.family.clone() {
        Some(fam) => fam,
        None => config.family(&grid)?,
    };
    let profile = family.profile(config.mu0)?;
    let decomposer = Decomposer::new(family)
        .with_tolerance(config.decomposition_tol)
        .with_tube(config.tube)
        .with_norm_weights(v.eps_v(), v.growth_rate());
    Ok(Setup {
        grid,
        v,
        profile,
        decomposer,
    })
}

impl Setup {
    fn recorder<'a>(&'a self, f: &'a Nonlinearity, options: &'a RunOptions) -> Recorder<'a> {
        Recorder {
            tracker: self.decomposer.tracker(),
            v: &self.v,
            f,
            v_samples: self.v.sample(&self.grid),
            options,
            rows: Vec::new(),
            lambda_rate: Vec::new(),
            states: Vec::new(),
            points: Vec::new(),
        }
    }
}

/// Evolves the configured initial data and decomposes every output sample.
/// A failed decomposition or modulation solve ends the run early; the rows
/// gathered so far are kept and the cause is reported.
pub fn run_evolution(config: &ExperimentConfig, options: RunOptions) -> Result<RunOutput> {
    let s = setup(config, &options)?;
    let f = &config.nonlinearity;
    let psi0 = initial_field(config, &s.profile, &s.v)?;
    let propagator = Propagator::new(&s.grid, &s.v, f, config.propagator_config())?;
    let mut recorder = s.recorder(f, &options);
    let failure = propagator
        .evolve_with(&psi0, config.t_final, |state| recorder.record(state))
        .err();
    recorder.finish(config, &s.profile, failure)
}

/// Decomposes a stored series of wave functions as [`run_evolution`] would.
pub fn decompose_states(config: &ExperimentConfig, states: &[EvolutionState], options: RunOptions) -> Result<RunOutput> {
    let s = setup(config, &options)?;
    let f = &config.nonlinearity;
    let mut recorder = s.recorder(f, &options);
    let failure = states.iter().try_for_each(|state| recorder.record(state)).err();
    recorder.finish(config, &s.profile, failure)
}

fn row_alpha(row: &SeriesRow) -> f64 {
    row.alpha_trans
        .iter()
        .chain(&row.alpha_boost)
        .chain([&row.alpha_gauge, &row.alpha_scale])
        .fold(0.0, |m, x| m.max(x.abs()))
}

fn summarize(
    config: &ExperimentConfig,
    v: &PotentialSpec,
    profile: &SolitonProfile,
    rows: &[SeriesRow],
    lambda_rate: &[f64],
    failure: Option<&Error>,
) -> Result<RunSummary> {
    let eps_h = config.eps_h()?;
    let eps = config.eps();
    let mut sup_w = FieldNorms::default();
    let (mut max_alpha, mut sup_p, mut mass_drift, mut energy_drift, mut lambda_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut sup_a = 0.0f64;
    if let Some(first) = rows.first() {
        for row in rows {
            sup_w = sup_norms(
                sup_w,
                FieldNorms {
                    l2: row.w_l2,
                    h1: row.w_h1,
                    weighted: row.w_weighted,
                    energy: row.w_energy,
                },
            );
            max_alpha = max_alpha.max(row_alpha(row));
            sup_p = sup_p.max(euclid(&row.p));
            sup_a = sup_a.max(euclid(&row.a));
            mass_drift = mass_drift.max((row.mass - first.mass).abs() / first.mass);
            energy_drift = energy_drift.max((row.energy - first.energy).abs());
            lambda_max = lambda_max.max(row.lambda.abs());
        }
    }
    let lyapunov_defect = if lambda_rate.len() == rows.len() && rows.len() >= 2 {
        let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let lambda: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
        Some(lyapunov_defect(&times, &lambda, lambda_rate, 1)?)
    } else {
        None
    };
    let t_run = rows.last().map_or(0.0, |r| r.t);
    let horizon_scale = 1.0 / (v.eps_v() * eps_h.sqrt() + eps * eps);
    Ok(RunSummary {
        config: config.clone(),
        eps,
        eps_v: config.eps_v,
        eps0: config.eps0(),
        eps_h,
        r: v.growth_rate(),
        constants: v.constants(),
        profile_residual: profile.residual,
        samples: rows.len(),
        t_run,
        sup_w,
        max_alpha,
        sup_p,
        centre_bound: 1.1 * v.eps_v() * sup_a,
        mass_drift,
        energy_drift,
        lambda_max,
        lyapunov_defect,
        horizon_scale,
        horizon_ratio: t_run / horizon_scale,
        failure: failure.map(FailureReport::from),
    })
}

/// `|Λ(T) - Λ(0) - ∫₀ᵀ dΛ/dt| / max|Λ|` with the trapezoid rule on every
/// `stride`-th sample; `T` is the last sample reached that way.
pub fn lyapunov_defect(times: &[f64], lambda: &[f64], rate: &[f64], stride: usize) -> Result<f64> {
    if times.len() != lambda.len() || times.len() != rate.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: lambda.len().min(rate.len()),
        });
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    let idx: Vec<usize> = (0..times.len()).step_by(stride).collect();
    if idx.len() < 2 {
        return Err(Error::SeriesTooShort(idx.len()));
    }
    let integral: f64 = idx
        .windows(2)
        .map(|w| 0.5 * (times[w[1]] - times[w[0]]) * (rate[w[0]] + rate[w[1]]))
        .sum();
    let last = *idx.last().expect("nonempty");
    let scale = idx.iter().map(|&i| lambda[i].abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::CollapseToZero { norm: scale });
    }
    Ok((lambda[last] - lambda[0] - integral).abs() / scale)
}

/// The companion run of the scaling study: `ε_V` and `ε₀` halved.
pub fn halved(config: &ExperimentConfig) -> ExperimentConfig {
    let mut c = config.clone();
    c.eps_v *= 0.5;
    if let Perturbation::SkewOrthogonalNoise { amplitude } = c.perturbation {
        c.perturbation = Perturbation::SkewOrthogonalNoise {
            amplitude: 0.5 * amplitude,
        };
    }
    c
}

/// Scale of the momentum bound, `√ε_h + ε₀ + ε_V`.
pub fn momentum_scale(summary: &RunSummary) -> f64 {
    summary.eps_h.sqrt() + summary.eps0 + summary.eps_v
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremCheck {
    pub large: RunSummary,
    pub small: RunSummary,
    /// `Ĉ = sup‖w‖_E / ε` of the large run.
    pub c_hat: f64,
    /// `sup‖w‖_E / (Ĉ ε)` of the small run; at most 1.5 to pass.
    pub norm_ratio: f64,
    /// `sup|α|` of the large run over that of the small one; in `[3, 6]` to pass.
    pub alpha_ratio: f64,
    /// `C_p = sup|p| / (√ε_h + ε₀ + ε_V)` of the large run.
    pub c_p: f64,
    /// The small run's `sup|p|` against `C_p` times its scale; at most 1.5 to pass.
    pub momentum_ratio: f64,
    pub norm_ok: bool,
    pub alpha_ok: bool,
    pub momentum_ok: bool,
}

impl TheoremCheck {
    pub fn passed(&self) -> bool {
        self.norm_ok && self.alpha_ok && self.momentum_ok
    }
}

pub fn theorem_check(config: &ExperimentConfig) -> Result<TheoremCheck> {
    let large = run_evolution(config, RunOptions::default())?;
    if let Some(e) = large.failure {
        return Err(e);
    }
    let small = run_evolution(&halved(config), RunOptions::default())?;
    if let Some(e) = small.failure {
        return Err(e);
    }
    Ok(compare_scaling(large.summary, small.summary))
}

pub fn compare_scaling(large: RunSummary, small: RunSummary) -> TheoremCheck {
    let c_hat = large.sup_w.energy / large.eps;
    let norm_ratio = small.sup_w.energy / (c_hat * small.eps);
    let alpha_ratio = large.max_alpha / small.max_alpha;
    let c_p = large.sup_p / momentum_scale(&large);
    let momentum_ratio = small.sup_p / (c_p * momentum_scale(&small));
    TheoremCheck {
        c_hat,
        norm_ratio,
        alpha_ratio,
        c_p,
        momentum_ratio,
        norm_ok: norm_ratio <= 1.5,
        alpha_ok: (3.0..=6.0).contains(&alpha_ratio),
        momentum_ok: momentum_ratio <= 1.5,
        large,
        small,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactFamilyReport {
    pub mu: f64,
    pub profile_residual: f64,
    pub sup_l2_error: f64,
    /// Largest `α` of the decomposed series, from differentiating it.
    pub max_alpha: f64,
    pub max_w: f64,
    /// Largest `|a - a_exact|` and `|p - p_exact|` over the samples.
    pub max_parameter_error: f64,
    pub samples: usize,
    pub passed: bool,
}

pub const EXACT_PROFILE_BUDGET: f64 = 1e-9;
pub const EXACT_ERROR_BUDGET: f64 = 1e-6;

/// Evolves a moving confined profile in a quadratic well, compares with the
/// exact solution and decomposes the run against the confined family.
pub fn exact_family_check(config: &ExperimentConfig) -> Result<ExactFamilyReport> {
    config.validate()?;
    let grid = config.grid()?;
    let v = config.potential_spec()?;
    let f = config.nonlinearity.clone();
    let confined = solve_confined_profile(&f, config.mu0, &v, &grid, &config.solver_options())?;
    let initial = ClassicalState::new(config.a0.clone(), config.p0.clone(), config.gamma0, config.mu0);
    let cmp = compare_with_pde(&confined, &v, &f, &initial, config.t_final, config.propagator_config())?;

    let family = confined_family(&f, &v, &grid)?.with_options(config.solver_options());
    let decomposer = Decomposer::new(Arc::new(family))
        .with_tolerance(config.decomposition_tol)
        .with_tube(config.tube)
        .with_norm_weights(v.eps_v(), v.growth_rate());
    let tracked = decomposer.track_series(&cmp.states);
    if let Some((_, e)) = tracked.failure {
        return Err(e);
    }
    let times: Vec<f64> = tracked.points.iter().map(|p| p.t).collect();
    let series: Vec<ClassicalState> = tracked
        .points
        .iter()
        .map(|p| ClassicalState::from_modulation(&p.result.sigma, p.gamma_unwrapped))
        .collect();
    let max_alpha = if series.len() >= 5 {
        alpha_from_series(&times, &series, &v)?
            .iter()
            .map(AlphaCoefficients::max_abs)
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let max_w = tracked.points.iter().map(|p| p.result.w_norms.l2).fold(0.0, f64::max);
    let max_parameter_error = series
        .iter()
        .zip(&cmp.trajectory)
        .flat_map(|(s, e)| {
            s.a.iter()
                .zip(&e.a)
                .chain(s.p.iter().zip(&e.p))
                .map(|(x, y)| (x - y).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    let passed = confined.residual() <= EXACT_PROFILE_BUDGET
        && cmp.sup_l2_error <= EXACT_ERROR_BUDGET
        && max_alpha <= EXACT_ERROR_BUDGET
        && max_w <= EXACT_ERROR_BUDGET;
    Ok(ExactFamilyReport {
        mu: confined.mu(),
        profile_residual: confined.residual(),
        sup_l2_error: cmp.sup_l2_error,
        max_alpha,
        max_w,
        max_parameter_error,
        samples: series.len(),
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundStateReport {
    pub mu: f64,
    pub mass: f64,
    pub mass_slope: f64,
    pub residual: f64,
    pub norm: f64,
    pub passed: bool,
}

pub fn ground_state(config: &ExperimentConfig) -> Result<(Arc<SolitonProfile>, GroundStateReport)> {
    config.validate()?;
    let grid = config.grid()?;
    let profile = config.family(&grid)?.profile(config.mu0)?;
    let report = GroundStateReport {
        mu: profile.mu,
        mass: profile.mass,
        mass_slope: profile.mass_slope,
        residual: profile.residual,
        norm: profile.norm(),
        passed: profile.residual <= config.profile_tol * profile.norm().max(1.0),
    };
    Ok((profile, report))
}
