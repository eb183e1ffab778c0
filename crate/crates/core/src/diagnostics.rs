//! Conserved and almost-conserved functionals, the Lyapunov functional with
//! its exact time derivative, and the coercivity constant of the linearized
//! energy on the symplectic complement.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::decomposition::{momentum, DecompositionResult, ModulationState};
use crate::error::{Error, Result};
use crate::grid::{ComplexField, FieldNorms, Grid, C64};
use crate::modulation::ClassicalState;
use crate::nonlinearity::{convolve, Nonlinearity};
use crate::potential::PotentialSpec;
use crate::profile::SolitonProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub momentum: Vec<f64>,
    pub h_classical: f64,
    pub lambda: f64,
    pub w_norms: FieldNorms,
    pub alpha_norm: f64,
    pub mu_drift: f64,
}

/// `N = ½∫|ψ|²` and `P = ½ Im ∫ conj(ψ) ∇ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMomentum {
    pub mass: f64,
    pub momentum: Vec<f64>,
}

pub fn mass(psi: &ComplexField) -> f64 {
    0.5 * psi.norm_l2().powi(2)
}

pub fn mass_and_momentum(psi: &ComplexField) -> MassMomentum {
    MassMomentum {
        mass: mass(psi),
        momentum: momentum(psi),
    }
}

fn potential_term(psi: &ComplexField, v: &[f64]) -> f64 {
    psi.grid().cell_volume()
        * psi
            .values()
            .iter()
            .zip(v)
            .map(|(u, v)| v * u.norm_sqr())
            .sum::<f64>()
}

/// `H_V(ψ) = ½∫(|∇ψ|² + V|ψ|²) - F(ψ)` with `V` given on the grid.
pub fn hamiltonian_with(psi: &ComplexField, v: &[f64], f: &Nonlinearity) -> f64 {
    0.5 * (psi.grid().gradient_norm_sq(psi.values()) + potential_term(psi, v)) - f.eval_functional(psi)
}

pub fn hamiltonian(psi: &ComplexField, v: &PotentialSpec, f: &Nonlinearity) -> f64 {
    if v.is_zero() {
        return free_energy(psi, f);
    }
    hamiltonian_with(psi, &v.sample(psi.grid()), f)
}

fn free_energy(psi: &ComplexField, f: &Nonlinearity) -> f64 {
    0.5 * psi.grid().gradient_norm_sq(psi.values()) - f.eval_functional(psi)
}

/// `E_μ(u) = H_0(u) + μ N(u)`
pub fn energy_emu(u: &ComplexField, mu: f64, f: &Nonlinearity) -> f64 {
    free_energy(u, f) + mu * mass(u)
}

/// `K_σ(ψ) = H_V + (p² + μ)N - 2p·P - ½∫(V(a) + ∇V(a)·(x - a))|ψ|²`
pub fn k_sigma(psi: &ComplexField, sigma: &ModulationState, v: &PotentialSpec, f: &Nonlinearity) -> f64 {
    let grid = psi.grid();
    let d = grid.dim();
    let mm = mass_and_momentum(psi);
    let p2: f64 = sigma.p.iter().map(|x| x * x).sum();
    let pp: f64 = sigma.p.iter().zip(&mm.momentum).map(|(a, b)| a * b).sum();
    let va = v.eval_v(&sigma.a);
    let ga = v.grad_v(&sigma.a);
    let linear: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            va + (0..d).map(|k| ga[k] * (x[k] - sigma.a[k])).sum::<f64>()
        })
        .collect();
    hamiltonian(psi, v, f) + (p2 + sigma.mu) * mm.mass - 2.0 * pp - 0.5 * potential_term(psi, &linear)
}

/// `⟨R_V u, u⟩ = ∫ R_V(x, a)|u|²` in the moving frame.
pub fn remainder_pairing(u: &ComplexField, a: &[f64], v: &PotentialSpec) -> f64 {
    if v.is_zero() {
        return 0.0;
    }
    potential_term(u, &v.sample_rv(u.grid(), a))
}

/// `Λ = E_μ(η + w) + ½⟨R_V(η + w), η + w⟩ - E_μ(η) - ½⟨R_V η, η⟩`
pub fn lyapunov(
    profile: &SolitonProfile,
    w: &ComplexField,
    a: &[f64],
    v: &PotentialSpec,
    f: &Nonlinearity,
) -> Result<f64> {
    let eta = profile.eta_field();
    let u = eta.add(w)?;
    let mu = profile.mu;
    Ok(energy_emu(&u, mu, f) + 0.5 * remainder_pairing(&u, a, v)
        - energy_emu(&eta, mu, f)
        - 0.5 * remainder_pairing(&eta, a, v))
}

fn real_pairing(grid: &Grid, u: &[C64], w: &[C64]) -> f64 {
    grid.pairing(u, w).re
}

/// Exact time derivative of `Λ` along the flow, given the decomposition and
/// the parameter velocities `σ̇`:
/// `p·⟨∇_a R_V w, w⟩ - ½ α_tr·D²V(a)·⟨x w, w⟩ + α_b·⟨i w, ∇w⟩
///  + 2p·⟨∇_a R_V η, w⟩ - ½ α_tr·⟨∇_a R_V η, η⟩ + ½ μ̇ ‖w‖² - μ̇ ⟨R_V η, ∂_μ η⟩`.
pub fn lyapunov_rate(result: &DecompositionResult, rate: &ClassicalState, v: &PotentialSpec) -> Result<f64> {
    let profile = &result.profile;
    let grid = &profile.grid;
    let d = grid.dim();
    let sigma = &result.sigma;
    if rate.dim() != d {
        return Err(Error::InvalidParameter("rate dimension does not match the grid".into()));
    }
    let w = result.w.values();
    let hd = grid.cell_volume();
    let grad = v.grad_v(&sigma.a);
    let alpha_tr: Vec<f64> = (0..d).map(|j| rate.a[j] - 2.0 * sigma.p[j]).collect();
    let alpha_b: Vec<f64> = (0..d).map(|j| -rate.p[j] - grad[j]).collect();
    let w_sq: Vec<f64> = w.iter().map(|x| x.norm_sqr()).collect();
    let eta = &profile.eta;

    let mut total = 0.0;
    if !v.is_zero() {
        let ga = v.sample_grad_a_rv(grid, &sigma.a);
        let rv = v.sample_rv(grid, &sigma.a);
        let hess = v.hess_v(&sigma.a);
        for j in 0..d {
            let ww: f64 = hd * ga[j].iter().zip(&w_sq).map(|(g, s)| g * s).sum::<f64>();
            let ew: f64 = hd * ga[j].iter().zip(eta).zip(w).map(|((g, e), x)| g * e * x.re).sum::<f64>();
            let ee: f64 = hd * ga[j].iter().zip(eta).map(|(g, e)| g * e * e).sum::<f64>();
            total += sigma.p[j] * ww + 2.0 * sigma.p[j] * ew - 0.5 * alpha_tr[j] * ee;
        }
        let xw: Vec<f64> = (0..d)
            .map(|k| hd * grid.coordinate_field(k).iter().zip(&w_sq).map(|(x, s)| x * s).sum::<f64>())
            .collect();
        for j in 0..d {
            for k in 0..d {
                total -= 0.5 * alpha_tr[j] * hess[(j, k)] * xw[k];
            }
        }
        let r_eta_dmu: f64 = hd * rv.iter().zip(eta).zip(&profile.d_mu_eta).map(|((r, e), m)| r * e * m).sum::<f64>();
        total -= rate.mu * r_eta_dmu;
    }
    let iw: Vec<C64> = w.iter().map(|x| x * C64::i()).collect();
    for j in 0..d {
        let dw = grid.derivative(w, j, 1);
        total += alpha_b[j] * real_pairing(grid, &iw, &dw);
    }
    total += 0.5 * rate.mu * hd * w_sq.iter().sum::<f64>();
    Ok(total)
}

/// Real and imaginary blocks of the linearized operator around a real profile.
enum Block {
    Plus,
    Minus,
}

struct Linearization<'a> {
    grid: &'a Grid,
    mu: f64,
    nonlinearity: &'a Nonlinearity,
    eta: &'a [f64],
    g: Vec<f64>,
    slope: Vec<f64>,
}

impl<'a> Linearization<'a> {
    fn new(profile: &'a SolitonProfile, f: &'a Nonlinearity) -> Self {
        let grid = &profile.grid;
        let eta_c: Vec<C64> = profile.eta.iter().map(|&e| C64::new(e, 0.0)).collect();
        let g = f.multiplier(grid, &eta_c);
        // f'(η) on real perturbations minus f'(η) on imaginary ones, for local terms.
        let slope = match f {
            Nonlinearity::Hartree { .. } | Nonlinearity::Zero => vec![0.0; grid.len()],
            _ => {
                let probe = ComplexField::new(grid, vec![C64::new(1.0, 0.0); grid.len()])
                    .expect("constant probe is finite");
                let plus = f
                    .derivative_apply(&profile.eta, &probe)
                    .expect("profile and grid agree");
                plus.values().iter().zip(&g).map(|(v, g)| v.re - g).collect()
            }
        };
        Self {
            grid,
            mu: profile.mu,
            nonlinearity: f,
            eta: &profile.eta,
            g,
            slope,
        }
    }

    fn apply(&self, block: &Block, v: &[f64]) -> Vec<f64> {
        let lap = self.grid.laplacian_real(v);
        let mut out: Vec<f64> = (0..v.len())
            .map(|i| -lap[i] + self.mu * v[i] - self.g[i] * v[i])
            .collect();
        if let Block::Plus = block {
            match self.nonlinearity {
                Nonlinearity::Hartree { lambda, kernel } => {
                    let mixed: Vec<f64> = self.eta.iter().zip(v).map(|(e, x)| e * x).collect();
                    let c = convolve(self.grid, kernel, &mixed);
                    out.iter_mut()
                        .zip(c.iter().zip(self.eta))
                        .for_each(|(o, (c, e))| *o -= 2.0 * lambda * c * e);
                }
                _ => out
                    .iter_mut()
                    .zip(self.slope.iter().zip(v))
                    .for_each(|(o, (s, x))| *o -= s * x),
            }
        }
        out
    }
}

/// Multiplies by `(1 + |k|²)^power` spectrally.
fn sobolev_power(grid: &Grid, v: &[f64], power: f64) -> Vec<f64> {
    let k2 = grid.kinetic_symbol();
    let c: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
    grid.apply_multiplier(&c, |i| C64::new((1.0 + k2[i]).powf(power), 0.0))
        .into_iter()
        .map(|x| x.re)
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthonormalize(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut v in vectors {
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-12 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Smallest eigenvalues of `B^{-1/2} L B^{-1/2}` (`B = 1 - Δ`) restricted to
/// the orthogonal complement of `B^{-1/2} c` for each constraint `c`, by
/// Lanczos with full reorthogonalization.
fn smallest_eigenvalues(
    lin: &Linearization,
    block: &Block,
    constraints: Vec<Vec<f64>>,
    count: usize,
) -> Result<Vec<f64>> {
    let grid = lin.grid;
    let n = grid.len();
    let fixed = orthonormalize(
        constraints
            .iter()
            .map(|c| sobolev_power(grid, c, -0.5))
            .collect(),
    );
    let operator = |z: &[f64]| -> Vec<f64> {
        let v = sobolev_power(grid, z, -0.5);
        let lv = lin.apply(block, &v);
        sobolev_power(grid, &lv, -0.5)
    };
    let project = |v: &mut Vec<f64>, basis: &[Vec<f64>]| {
        for _ in 0..2 {
            for b in fixed.iter().chain(basis) {
                let c = dot(v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
    };
    // Smooth, even-odd mixed start vector so no symmetry class is missed.
    let mut start: Vec<f64> = (0..n)
        .map(|i| {
            let x = grid.point(i);
            let r2: f64 = x[..grid.dim()].iter().map(|v| v * v).sum();
            (1.0 + 0.3 * x[0] + 0.1 * x[0] * x[0]) * (-0.05 * r2).exp()
        })
        .collect();
    project(&mut start, &[]);
    let norm = dot(&start, &start).sqrt();
    let mut basis: Vec<Vec<f64>> = vec![start.into_iter().map(|x| x / norm).collect()];
    let max_dim = (n - fixed.len()).min(400);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last_change = f64::INFINITY;
    let mut previous: Vec<f64> = Vec::new();
    loop {
        let k = basis.len() - 1;
        let mut w = operator(&basis[k]);
        let a = dot(&w, &basis[k]);
        alphas.push(a);
        project(&mut w, &basis);
        let b = dot(&w, &w).sqrt();
        let m = alphas.len();
        if m >= count && (m % 10 == 0 || b < 1e-12 || m >= max_dim) {
            let t = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    alphas[i]
                } else if i + 1 == j {
                    betas[i]
                } else if j + 1 == i {
                    betas[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
            let values: Vec<f64> = order.iter().take(count).map(|&i| eig.eigenvalues[i]).collect();
            let residual = order
                .iter()
                .take(count)
                .map(|&i| (b * eig.eigenvectors[(m - 1, i)]).abs())
                .fold(0.0f64, f64::max);
            if !previous.is_empty() {
                last_change = values
                    .iter()
                    .zip(&previous)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0f64, f64::max);
            }
            if residual < 1e-10 || b < 1e-12 || last_change < 1e-13 {
                return Ok(values);
            }
            if m >= max_dim {
                return Err(Error::NonConvergence {
                    what: "coercivity eigensolve",
                    iterations: m,
                    residual,
                });
            }
            previous = values;
        }
        betas.push(b);
        basis.push(w.into_iter().map(|x| x / b).collect());
    }
}

/// Lowest eigenvalues of the linearized energy relative to the `H¹` form,
/// for both the real (`L₊`) and imaginary (`L₋`) blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CoercivitySpectrum {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl CoercivitySpectrum {
    pub fn min(&self) -> f64 {
        self.plus.iter().chain(&self.minus).cloned().fold(f64::INFINITY, f64::min)
    }
}

/// With `projected`, perturbations are restricted to `Re w ⊥ η, x_j η` and
/// `Im w ⊥ ∂_j η, ∂_μ η`; without it the zero modes and the negative
/// direction of the linearization remain.
pub fn coercivity_spectrum(
    profile: &SolitonProfile,
    f: &Nonlinearity,
    projected: bool,
    count: usize,
) -> Result<CoercivitySpectrum> {
    let lin = Linearization::new(profile, f);
    let grid = &profile.grid;
    let (plus_c, minus_c) = if projected {
        let mut plus = vec![profile.eta.clone()];
        for ax in 0..grid.dim() {
            let x = grid.coordinate_field(ax);
            plus.push(x.iter().zip(&profile.eta).map(|(x, e)| x * e).collect());
        }
        let mut minus = profile.gradient.clone();
        minus.push(profile.d_mu_eta.clone());
        (plus, minus)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(CoercivitySpectrum {
        plus: smallest_eigenvalues(&lin, &Block::Plus, plus_c, count)?,
        minus: smallest_eigenvalues(&lin, &Block::Minus, minus_c, count)?,
    })
}

/// Measured coercivity constant `ρ̂₂ = min ⟨L w, w⟩ / ‖w‖²_{H¹}` over the
/// symplectic complement.
pub fn coercivity_estimate(profile: &SolitonProfile, f: &Nonlinearity) -> Result<f64> {
    Ok(coercivity_spectrum(profile, f, true, 1)?.min())
}

/// `‖ψ - S_σ η_μ‖`, the `L²` norm of `w`.
pub fn tube_distance(result: &DecompositionResult) -> f64 {
    result.w_norms.l2
}

/// Maximal defects of `d/dt ⟨ψ, -i∇ψ⟩ = -⟨(∇V)ψ, ψ⟩` and
/// `d/dt ⟨xψ, ψ⟩ = 2⟨ψ, -i∇ψ⟩` over a uniformly sampled series, with the time
/// derivatives taken by centered differences at interior samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhrenfestResiduals {
    pub momentum: f64,
    pub position: f64,
}

pub fn ehrenfest_residuals(
    states: &[crate::propagator::EvolutionState],
    v: &PotentialSpec,
) -> Result<EhrenfestResiduals> {
    let n = states.len();
    if n < 3 {
        return Err(Error::SeriesTooShort(n));
    }
    let grid = states[0].psi.grid();
    let d = grid.dim();
    let hd = grid.cell_volume();
    let grad_v: Vec<Vec<f64>> = {
        let rows: Vec<Vec<f64>> = (0..grid.len()).map(|i| v.grad_v(&grid.point(i)[..d])).collect();
        (0..d).map(|k| rows.iter().map(|r| r[k]).collect()).collect()
    };
    let coords: Vec<Vec<f64>> = (0..d).map(|k| grid.coordinate_field(k)).collect();
    let moment = |psi: &ComplexField, w: &[f64]| -> f64 {
        hd * psi.values().iter().zip(w).map(|(u, w)| w * u.norm_sqr()).sum::<f64>()
    };
    // ⟨ψ, -i∇ψ⟩ = 2P
    let pi: Vec<Vec<f64>> = states
        .iter()
        .map(|s| momentum(&s.psi).into_iter().map(|m| 2.0 * m).collect())
        .collect();
    let x: Vec<Vec<f64>> = states
        .iter()
        .map(|s| coords.iter().map(|c| moment(&s.psi, c)).collect())
        .collect();
    let mut out = EhrenfestResiduals {
        momentum: 0.0,
        position: 0.0,
    };
    for k in 1..n - 1 {
        let dt = states[k + 1].t - states[k - 1].t;
        for j in 0..d {
            let dpi = (pi[k + 1][j] - pi[k - 1][j]) / dt;
            let force = moment(&states[k].psi, &grad_v[j]);
            out.momentum = out.momentum.max((dpi + force).abs());
            let dx = (x[k + 1][j] - x[k - 1][j]) / dt;
            out.position = out.position.max((dx - 2.0 * pi[k][j]).abs());
        }
    }
    Ok(out)
}
