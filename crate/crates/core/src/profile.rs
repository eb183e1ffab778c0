//! Ground-state profiles `-Δη + μη - f(η) = 0`, their μ-derivatives, the mass
//! curve and the tangent vectors of the soliton family.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, C64};
use crate::linalg;
use crate::nonlinearity::Nonlinearity;

/// Closed frequency interval the modulation parameter μ may occupy.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Default for Interval {
    fn default() -> Self {
        Self {
            low: 0.5,
            high: 2.0,
        }
    }
}

impl Interval {
    pub fn contains(&self, mu: f64) -> bool {
        mu >= self.low && mu <= self.high
    }
}

#[derive(Clone)]
pub struct SolitonProfile {
    pub mu: f64,
    pub grid: Grid,
    pub eta: Vec<f64>,
    /// `∂_x_j η` per axis.
    pub gradient: Vec<Vec<f64>>,
    pub d_mu_eta: Vec<f64>,
    pub d2_mu_eta: Vec<f64>,
    /// `½∫η²`
    pub mass: f64,
    pub mass_slope: f64,
    /// `‖-Δη + μη + Qη - f(η)‖`, `Q` being any confining term used in the solve.
    pub residual: f64,
}

impl fmt::Debug for SolitonProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolitonProfile")
            .field("mu", &self.mu)
            .field("grid", &self.grid.spec())
            .field("mass", &self.mass)
            .field("mass_slope", &self.mass_slope)
            .field("residual", &self.residual)
            .finish()
    }
}

impl SolitonProfile {
    fn assemble(
        grid: &Grid,
        mu: f64,
        eta: Vec<f64>,
        d_mu_eta: Vec<f64>,
        d2_mu_eta: Vec<f64>,
        mass_slope: f64,
        residual: f64,
    ) -> Self {
        let gradient = (0..grid.dim())
            .map(|ax| grid.derivative_real(&eta, ax, 1))
            .collect();
        let mass = 0.5 * grid.dot(&eta, &eta);
        Self {
            mu,
            grid: grid.clone(),
            eta,
            gradient,
            d_mu_eta,
            d2_mu_eta,
            mass,
            mass_slope,
            residual,
        }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn norm(&self) -> f64 {
        self.grid.dot(&self.eta, &self.eta).sqrt()
    }

    pub fn eta_field(&self) -> ComplexField {
        real_field(&self.grid, &self.eta)
    }
}

pub(crate) fn real_field(grid: &Grid, v: &[f64]) -> ComplexField {
    ComplexField::from_raw(grid, v.iter().map(|&x| C64::new(x, 0.0)).collect())
}

pub(crate) fn imag_field(grid: &Grid, v: &[f64]) -> ComplexField {
    ComplexField::from_raw(grid, v.iter().map(|&x| C64::new(0.0, x)).collect())
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// The explicit 1D cubic profile `√(2μ/λ) sech(√μ x)` with analytic μ-derivatives.
pub fn closed_form_cubic_1d(mu: f64, lambda: f64, grid: &Grid) -> Result<SolitonProfile> {
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter(
            "the closed-form profile is one-dimensional".into(),
        ));
    }
    if !(mu > 0.0 && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "closed form needs mu > 0 and lambda > 0, got {mu}, {lambda}"
        )));
    }
    let s = mu.sqrt();
    let amp = (2.0 / lambda).sqrt();
    let c = 0.5 * amp;
    let x = grid.axis();
    let eta: Vec<f64> = x.iter().map(|&x| amp * s * sech(s * x)).collect();
    let d1: Vec<f64> = x
        .iter()
        .map(|&x| {
            let (se, th) = (sech(s * x), (s * x).tanh());
            c / s * se * (1.0 - s * x * th)
        })
        .collect();
    let d2: Vec<f64> = x
        .iter()
        .map(|&x| {
            let (se, th) = (sech(s * x), (s * x).tanh());
            let da_ds = c * (-se / (s * s) - x * se * th / s - x * x * se * (se * se - th * th));
            da_ds / (2.0 * s)
        })
        .collect();
    let mut profile = SolitonProfile::assemble(grid, mu, eta, d1, d2, 1.0 / (lambda * s), 0.0);
    profile.mass = 2.0 * s / lambda;
    profile.residual = residual_norm(&Nonlinearity::cubic(lambda), grid, mu, None, &profile.eta);
    Ok(profile)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Residual target relative to `‖η‖`.
    pub tol: f64,
    pub max_flow_steps: usize,
    pub max_newton_steps: usize,
    /// Pseudo-time step of the normalized gradient flow.
    pub flow_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_flow_steps: 10_000,
            max_newton_steps: 50,
            flow_step: 0.5,
        }
    }
}

fn residual_vec(f: &Nonlinearity, grid: &Grid, mu: f64, extra: Option<&[f64]>, eta: &[f64]) -> Vec<f64> {
    let lap = grid.laplacian_real(eta);
    let field: Vec<C64> = eta.iter().map(|&e| C64::new(e, 0.0)).collect();
    let g = f.multiplier(grid, &field);
    (0..eta.len())
        .map(|i| {
            let q = extra.map_or(0.0, |q| q[i]);
            -lap[i] + (mu + q - g[i]) * eta[i]
        })
        .collect()
}

fn residual_norm(f: &Nonlinearity, grid: &Grid, mu: f64, extra: Option<&[f64]>, eta: &[f64]) -> f64 {
    let r = residual_vec(f, grid, mu, extra, eta);
    grid.dot(&r, &r).sqrt()
}

fn even_projection(grid: &Grid, v: &mut [f64]) {
    let orig = v.to_vec();
    for (i, x) in v.iter_mut().enumerate() {
        *x = 0.5 * (orig[i] + orig[grid.reflect_index(i)]);
    }
}

/// Rough profile used to seed the flow: the exact 1D power-law soliton shape
/// evaluated on `|x|`.
fn seed_profile(f: &Nonlinearity, mu: f64, grid: &Grid) -> Vec<f64> {
    let (lambda, s) = match *f {
        Nonlinearity::LocalPower { lambda, s } => (lambda, s),
        Nonlinearity::TwoPower { lambda, s2, .. } => (lambda, s2),
        Nonlinearity::Hartree { lambda, kernel } => {
            let weight: f64 = kernel.sample(grid).iter().sum::<f64>() * grid.cell_volume();
            (lambda * weight, 2.0)
        }
        Nonlinearity::Zero => (1.0, 2.0),
    };
    let amp = ((s + 2.0) * mu / (2.0 * lambda)).powf(1.0 / s);
    grid.radius_squared_field()
        .into_iter()
        .map(|r2| {
            let z = 0.5 * s * mu.sqrt() * r2.sqrt();
            amp * sech(z).powf(2.0 / s)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub eta: Vec<f64>,
    /// Rayleigh-quotient frequency `(∫f(η)η - ∫|∇η|² - ∫Qη²) / ∫η²`.
    pub chemical_potential: f64,
    pub steps: usize,
}

fn chemical_potential(f: &Nonlinearity, grid: &Grid, extra: Option<&[f64]>, eta: &[f64]) -> f64 {
    let field: Vec<C64> = eta.iter().map(|&e| C64::new(e, 0.0)).collect();
    let g = f.multiplier(grid, &field);
    let grad = grid.gradient_norm_sq(&field);
    let hd = grid.cell_volume();
    let mut pot = 0.0;
    let mut nl = 0.0;
    let mut nrm = 0.0;
    for i in 0..eta.len() {
        let e2 = eta[i] * eta[i];
        nl += g[i] * e2;
        pot += extra.map_or(0.0, |q| q[i]) * e2;
        nrm += e2;
    }
    (hd * (nl - pot) - grad) / (hd * nrm)
}

/// Mass-normalized imaginary-time flow `η_t = Δη - Qη + f(η)` with backward
/// Euler in the Laplacian and `Q`, renormalized to `½∫η² = mass` every step.
pub fn normalized_flow(
    f: &Nonlinearity,
    grid: &Grid,
    extra: Option<&[f64]>,
    mass: f64,
    start: &[f64],
    opts: &SolverOptions,
    stop_tol: f64,
) -> Result<FlowResult> {
    let tau = opts.flow_step;
    let k2 = grid.kinetic_symbol().to_vec();
    let mut eta = start.to_vec();
    let renormalize = |v: &mut Vec<f64>| -> Result<()> {
        let m = 0.5 * grid.dot(v, v);
        if !(m.sqrt() > 1e-8) {
            return Err(Error::CollapseToZero { norm: (2.0 * m).sqrt() });
        }
        let scale = (mass / m).sqrt();
        v.iter_mut().for_each(|x| *x *= scale);
        Ok(())
    };
    renormalize(&mut eta)?;
    for step in 1..=opts.max_flow_steps {
        let field: Vec<C64> = eta.iter().map(|&e| C64::new(e, 0.0)).collect();
        let g = f.multiplier(grid, &field);
        let mut rhs: Vec<C64> = (0..eta.len())
            .map(|i| {
                let q = extra.map_or(0.0, |q| q[i]);
                C64::new(eta[i] * (1.0 + tau * g[i]) / (1.0 + tau * q), 0.0)
            })
            .collect();
        grid.fft(&mut rhs);
        rhs.iter_mut().zip(&k2).for_each(|(v, k)| *v /= 1.0 + tau * k);
        grid.ifft(&mut rhs);
        let mut next: Vec<f64> = rhs.iter().map(|v| v.re).collect();
        even_projection(grid, &mut next);
        renormalize(&mut next)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient flow"));
        }
        let change = next
            .iter()
            .zip(&eta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        eta = next;
        if change < stop_tol * tau {
            let mu = chemical_potential(f, grid, extra, &eta);
            return Ok(FlowResult {
                eta,
                chemical_potential: mu,
                steps: step,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "normalized gradient flow",
        iterations: opts.max_flow_steps,
        residual: f64::NAN,
    })
}

/// Newton iteration on the residual at fixed μ, preconditioned by `(-Δ+μ)⁻¹`.
fn newton_polish(
    f: &Nonlinearity,
    grid: &Grid,
    mu: f64,
    extra: Option<&[f64]>,
    start: Vec<f64>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, f64)> {
    let k2 = grid.kinetic_symbol().to_vec();
    let mut eta = start;
    let sqrt_h = grid.cell_volume().sqrt();
    let mut rn = residual_norm(f, grid, mu, extra, &eta);
    let mut polish = 0;
    for _ in 0..opts.max_newton_steps {
        let nrm = grid.dot(&eta, &eta).sqrt();
        if nrm < 1e-8 {
            return Err(Error::CollapseToZero { norm: nrm });
        }
        let target = opts.tol * nrm;
        if rn <= target {
            polish += 1;
            if polish > 2 || rn <= 1e-3 * target {
                break;
            }
        }
        let r = residual_vec(f, grid, mu, extra, &eta);
        let eta_now = eta.clone();
        let apply = |v: &[f64]| -> Vec<f64> {
            let w = real_field(grid, v);
            let lw = f
                .linearized_apply(&eta_now, mu, &w)
                .expect("profile lengths agree");
            lw.values()
                .iter()
                .enumerate()
                .map(|(i, c)| c.re + extra.map_or(0.0, |q| q[i]) * v[i])
                .collect()
        };
        let precond = |v: &[f64]| -> Vec<f64> {
            let c: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
            grid.apply_multiplier(&c, |i| C64::new(1.0 / (k2[i] + mu), 0.0))
                .iter()
                .map(|z| z.re)
                .collect()
        };
        let b: Vec<f64> = r.iter().map(|v| -v).collect();
        let krylov_tol = (1e-4 * rn).max(1e-3 * target) / sqrt_h;
        let delta = linalg::gmres(apply, precond, &b, krylov_tol, 80, 800);
        let mut next: Vec<f64> = eta.iter().zip(&delta).map(|(a, b)| a + b).collect();
        even_projection(grid, &mut next);
        let next_rn = residual_norm(f, grid, mu, extra, &next);
        if !next_rn.is_finite() {
            return Err(Error::NonFinite("newton polish"));
        }
        if rn <= target && next_rn >= rn {
            break;
        }
        eta = next;
        rn = next_rn;
    }
    let target = opts.tol * grid.dot(&eta, &eta).sqrt();
    if rn > target {
        return Err(Error::NonConvergence {
            what: "profile newton polish",
            iterations: opts.max_newton_steps,
            residual: rn,
        });
    }
    Ok((eta, rn))
}

/// Flow to a trial mass, adjust that mass by secant steps until the flow's
/// frequency is close to `mu`, then polish with Newton at fixed `mu`.
pub(crate) fn solve_stationary(
    f: &Nonlinearity,
    grid: &Grid,
    mu: f64,
    extra: Option<&[f64]>,
    warm: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, f64)> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("frequency {mu} must be positive")));
    }
    if matches!(f, Nonlinearity::Zero) {
        return Err(Error::InvalidParameter(
            "no localized positive-frequency profile without self-interaction".into(),
        ));
    }
    f.validate(grid.dim())?;
    if let Some(start) = warm {
        if let Ok(done) = newton_polish(f, grid, mu, extra, start.to_vec(), opts) {
            return Ok(done);
        }
    }
    let mut eta = seed_profile(f, mu, grid);
    let mut log_mass = (0.5 * grid.dot(&eta, &eta)).ln();
    let mut slope = match *f {
        Nonlinearity::LocalPower { s, .. } => 2.0 / s - 0.5 * grid.dim() as f64,
        Nonlinearity::TwoPower { s2, .. } => 2.0 / s2 - 0.5 * grid.dim() as f64,
        _ => 0.5,
    };
    let mut previous: Option<(f64, f64)> = None;
    for _ in 0..40 {
        let flow = normalized_flow(f, grid, extra, log_mass.exp(), &eta, opts, 1e-9)?;
        eta = flow.eta;
        let mu_m = flow.chemical_potential;
        if !(mu_m > 0.0) {
            return Err(Error::CollapseToZero {
                norm: grid.dot(&eta, &eta).sqrt(),
            });
        }
        if (mu_m - mu).abs() <= 0.01 * mu {
            break;
        }
        if let Some((lm, lmu)) = previous {
            let s = (log_mass - lm) / (mu_m.ln() - lmu);
            if s.is_finite() && s.abs() > 1e-3 {
                slope = s;
            }
        }
        previous = Some((log_mass, mu_m.ln()));
        let step = (slope * (mu.ln() - mu_m.ln())).clamp(-1.0, 1.0);
        log_mass += step;
    }
    newton_polish(f, grid, mu, extra, eta, opts)
}

/// Profile with μ-derivatives from centered differences of solved neighbours.
pub(crate) fn solved_profile(
    f: &Nonlinearity,
    grid: &Grid,
    mu: f64,
    extra: Option<&[f64]>,
    warm: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<SolitonProfile> {
    let (eta, residual) = solve_stationary(f, grid, mu, extra, warm, opts)?;
    let dmu = 1e-4 * mu;
    let (plus, _) = solve_stationary(f, grid, mu + dmu, extra, Some(&eta), opts)?;
    let (minus, _) = solve_stationary(f, grid, mu - dmu, extra, Some(&eta), opts)?;
    let d1: Vec<f64> = plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) / (2.0 * dmu))
        .collect();
    let d2: Vec<f64> = (0..eta.len())
        .map(|i| (plus[i] - 2.0 * eta[i] + minus[i]) / (dmu * dmu))
        .collect();
    let slope = grid.dot(&eta, &d1);
    if !(slope > 0.0) {
        return Err(Error::StabilityViolation { mu, slope });
    }
    Ok(SolitonProfile::assemble(grid, mu, eta, d1, d2, slope, residual))
}

pub fn solve_ground_state(
    f: &Nonlinearity,
    mu: f64,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<SolitonProfile> {
    solved_profile(f, grid, mu, None, None, opts)
}

/// A μ-indexed family of profiles on a fixed grid.
pub trait ProfileFamily: Send + Sync {
    fn grid(&self) -> &Grid;
    fn nonlinearity(&self) -> &Nonlinearity;
    fn profile(&self, mu: f64) -> Result<Arc<SolitonProfile>>;
    fn admissible(&self) -> Interval;

    fn mass(&self, mu: f64) -> Result<f64> {
        Ok(self.profile(mu)?.mass)
    }

    /// Exact `m'(μ)` when known in closed form.
    fn exact_mass_slope(&self, _mu: f64) -> Option<f64> {
        None
    }

    /// Confining term `Q` that enters the profile equation, if any.
    fn confinement(&self) -> Option<&[f64]> {
        None
    }

    /// Inverse of the mass curve on the admissible interval.
    fn frequency_for_mass(&self, mass: f64) -> Result<f64> {
        invert_mass(self, mass)
    }
}

fn invert_mass<F: ProfileFamily + ?Sized>(family: &F, target: f64) -> Result<f64> {
    let iv = family.admissible();
    let (mut lo, mut hi) = (iv.low, iv.high);
    let (mut f_lo, mut f_hi) = (family.mass(lo)? - target, family.mass(hi)? - target);
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::MassOutOfRange {
            mass: target,
            low: f_lo + target,
            high: f_hi + target,
        });
    }
    // Illinois regula falsi; the mass curve is monotone on the interval.
    let mut side = 0;
    for _ in 0..100 {
        let mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let f_mid = family.mass(mid)? - target;
        if f_mid.abs() <= 1e-15 * target || (hi - lo) < 1e-15 * hi {
            return Ok(mid);
        }
        if f_mid > 0.0 {
            hi = mid;
            f_hi = f_mid;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        } else {
            lo = mid;
            f_lo = f_mid;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The explicit one-dimensional cubic family.
#[derive(Debug, Clone)]
pub struct CubicFamily {
    grid: Grid,
    nonlinearity: Nonlinearity,
    lambda: f64,
    interval: Interval,
}

impl CubicFamily {
    pub fn new(grid: &Grid, lambda: f64) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::InvalidParameter(
                "the closed-form family is one-dimensional".into(),
            ));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("coupling {lambda}")));
        }
        Ok(Self {
            grid: grid.clone(),
            nonlinearity: Nonlinearity::cubic(lambda),
            lambda,
            interval: Interval::default(),
        })
    }

    pub fn with_interval(mut self, interval: Interval) -> Self {
        self.interval = interval;
        self
    }
}

impl ProfileFamily for CubicFamily {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    fn profile(&self, mu: f64) -> Result<Arc<SolitonProfile>> {
        Ok(Arc::new(closed_form_cubic_1d(mu, self.lambda, &self.grid)?))
    }

    fn admissible(&self) -> Interval {
        self.interval
    }

    fn mass(&self, mu: f64) -> Result<f64> {
        Ok(2.0 * mu.sqrt() / self.lambda)
    }

    fn exact_mass_slope(&self, mu: f64) -> Option<f64> {
        Some(1.0 / (self.lambda * mu.sqrt()))
    }

    fn frequency_for_mass(&self, mass: f64) -> Result<f64> {
        let mu = (0.5 * self.lambda * mass).powi(2);
        if !self.interval.contains(mu) {
            return Err(Error::MassOutOfRange {
                mass,
                low: 2.0 * self.interval.low.sqrt() / self.lambda,
                high: 2.0 * self.interval.high.sqrt() / self.lambda,
            });
        }
        Ok(mu)
    }
}

/// Numerically solved family with a per-μ cache, optionally with a confining
/// term `Q` in the profile equation.
pub struct SolvedFamily {
    grid: Grid,
    nonlinearity: Nonlinearity,
    confinement: Option<Vec<f64>>,
    interval: Interval,
    options: SolverOptions,
    cache: Mutex<HashMap<u64, Arc<SolitonProfile>>>,
    masses: Mutex<HashMap<u64, f64>>,
}

impl fmt::Debug for SolvedFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolvedFamily")
            .field("grid", &self.grid.spec())
            .field("nonlinearity", &self.nonlinearity)
            .field("confined", &self.confinement.is_some())
            .field("interval", &self.interval)
            .finish()
    }
}

impl SolvedFamily {
    pub fn new(grid: &Grid, nonlinearity: Nonlinearity) -> Result<Self> {
        nonlinearity.validate(grid.dim())?;
        Ok(Self {
            grid: grid.clone(),
            nonlinearity,
            confinement: None,
            interval: Interval::default(),
            options: SolverOptions::default(),
            cache: Mutex::new(HashMap::new()),
            masses: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_confinement(mut self, q: Vec<f64>) -> Result<Self> {
        if q.len() != self.grid.len() {
            return Err(Error::LengthMismatch {
                expected: self.grid.len(),
                got: q.len(),
            });
        }
        self.confinement = Some(q);
        Ok(self)
    }

    pub fn with_interval(mut self, interval: Interval) -> Self {
        self.interval = interval;
        self
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    fn nearest(&self, mu: f64) -> Option<Arc<SolitonProfile>> {
        let cache = self.cache.lock().expect("profile cache poisoned");
        cache
            .values()
            .min_by(|a, b| (a.mu - mu).abs().total_cmp(&(b.mu - mu).abs()))
            .filter(|p| (p.mu - mu).abs() < 0.05 * mu)
            .cloned()
    }
}

impl ProfileFamily for SolvedFamily {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    fn profile(&self, mu: f64) -> Result<Arc<SolitonProfile>> {
        let key = mu.to_bits();
        if let Some(p) = self.cache.lock().expect("profile cache poisoned").get(&key) {
            return Ok(p.clone());
        }
        let warm = self.nearest(mu);
        let profile = Arc::new(solved_profile(
            &self.nonlinearity,
            &self.grid,
            mu,
            self.confinement.as_deref(),
            warm.as_ref().map(|p| p.eta.as_slice()),
            &self.options,
        )?);
        let mut cache = self.cache.lock().expect("profile cache poisoned");
        if cache.len() > 256 {
            cache.clear();
        }
        cache.insert(key, profile.clone());
        Ok(profile)
    }

    fn admissible(&self) -> Interval {
        self.interval
    }

    fn mass(&self, mu: f64) -> Result<f64> {
        let key = mu.to_bits();
        if let Some(m) = self.masses.lock().expect("mass cache poisoned").get(&key) {
            return Ok(*m);
        }
        if let Some(p) = self.cache.lock().expect("profile cache poisoned").get(&key) {
            return Ok(p.mass);
        }
        let warm = self.nearest(mu);
        let (eta, _) = solve_stationary(
            &self.nonlinearity,
            &self.grid,
            mu,
            self.confinement.as_deref(),
            warm.as_ref().map(|p| p.eta.as_slice()),
            &self.options,
        )?;
        let m = 0.5 * self.grid.dot(&eta, &eta);
        self.masses.lock().expect("mass cache poisoned").insert(key, m);
        Ok(m)
    }

    fn confinement(&self) -> Option<&[f64]> {
        self.confinement.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassCurve {
    pub m: f64,
    pub m_prime: f64,
}

/// Mass and its slope; the slope is analytic when the family knows it and no
/// explicit step is requested, otherwise a centered difference with step
/// `delta` (default `1e-4 μ`).
pub fn mass_curve(family: &dyn ProfileFamily, mu: f64, delta: Option<f64>) -> Result<MassCurve> {
    let m = family.mass(mu)?;
    let m_prime = match (delta, family.exact_mass_slope(mu)) {
        (None, Some(slope)) => slope,
        _ => {
            let d = delta.unwrap_or(1e-4 * mu);
            (family.mass(mu + d)? - family.mass(mu - d)?) / (2.0 * d)
        }
    };
    if !(m_prime > 0.0) {
        return Err(Error::StabilityViolation { mu, slope: m_prime });
    }
    Ok(MassCurve { m, m_prime })
}

/// Tangent vectors to the soliton family at a profile.
#[derive(Debug, Clone)]
pub struct TangentBasis {
    /// `-∂_j η`
    pub trans: Vec<ComplexField>,
    /// `iη`
    pub gauge: ComplexField,
    /// `i x_j η`
    pub boost: Vec<ComplexField>,
    /// `∂_μ η`
    pub scale: ComplexField,
}

pub fn tangent_basis(profile: &SolitonProfile) -> TangentBasis {
    let grid = &profile.grid;
    let trans = profile
        .gradient
        .iter()
        .map(|g| real_field(grid, &g.iter().map(|v| -v).collect::<Vec<_>>()))
        .collect();
    let boost = (0..grid.dim())
        .map(|ax| {
            let x = grid.coordinate_field(ax);
            let v: Vec<f64> = x.iter().zip(&profile.eta).map(|(x, e)| x * e).collect();
            imag_field(grid, &v)
        })
        .collect();
    TangentBasis {
        trans,
        gauge: imag_field(grid, &profile.eta),
        boost,
        scale: real_field(grid, &profile.d_mu_eta),
    }
}

/// Writes the profile as whitespace-separated columns: coordinates then η.
pub fn export_profile(path: &Path, profile: &SolitonProfile) -> Result<()> {
    let grid = &profile.grid;
    let mut out = String::new();
    for (i, e) in profile.eta.iter().enumerate() {
        let x = grid.point(i);
        for xi in &x[..grid.dim()] {
            out.push_str(&format!("{xi:.16e} "));
        }
        out.push_str(&format!("{e:.16e}\n"));
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a table written by [`export_profile`], returning the rows.
pub fn import_profile(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad profile entry {t:?}: {e}")))
                })
                .collect()
        })
        .collect()
}
