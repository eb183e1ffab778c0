//! Strang split-step Fourier integrator for
//! `i ∂_t ψ = -Δψ + V ψ - f(ψ)` on the periodic box.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, C64};
use crate::nonlinearity::Nonlinearity;
use crate::potential::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub output_stride: usize,
    /// Zero the upper third of the spectrum after each kinetic step.
    pub dealias: bool,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            output_stride: 10,
            dealias: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub t: f64,
    pub psi: ComplexField,
}

#[derive(Debug, Clone)]
pub struct Propagator {
    grid: Grid,
    potential: Vec<f64>,
    nonlinearity: Nonlinearity,
    config: PropagatorConfig,
    kinetic_phase: Vec<C64>,
    mask: Option<Vec<bool>>,
}

impl Propagator {
    pub fn new(
        grid: &Grid,
        potential: &PotentialSpec,
        nonlinearity: &Nonlinearity,
        config: PropagatorConfig,
    ) -> Result<Self> {
        if potential.dim() != grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "{}-dimensional potential on a {}-dimensional grid",
                potential.dim(),
                grid.dim()
            )));
        }
        Self::with_potential_samples(grid, potential.sample(grid), nonlinearity, config)
    }

    /// Same as [`Propagator::new`] with `V` given by its grid values.
    pub fn with_potential_samples(
        grid: &Grid,
        potential: Vec<f64>,
        nonlinearity: &Nonlinearity,
        config: PropagatorConfig,
    ) -> Result<Self> {
        if !(config.dt.is_finite() && config.dt != 0.0) {
            return Err(Error::InvalidParameter(format!("time step {}", config.dt)));
        }
        if config.output_stride == 0 {
            return Err(Error::InvalidParameter("output stride must be positive".into()));
        }
        if potential.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: potential.len(),
            });
        }
        nonlinearity.validate(grid.dim())?;
        let v_max = potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if config.dt.abs() * v_max >= PI {
            return Err(Error::PhaseWrapGuard {
                value: config.dt.abs() * v_max,
            });
        }
        let kinetic_phase = grid
            .kinetic_symbol()
            .iter()
            .map(|k2| C64::from_polar(1.0, -config.dt * k2))
            .collect();
        let mask = config.dealias.then(|| dealias_mask(grid));
        Ok(Self {
            grid: grid.clone(),
            potential,
            nonlinearity: nonlinearity.clone(),
            config,
            kinetic_phase,
            mask,
        })
    }

    pub fn config(&self) -> PropagatorConfig {
        self.config
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// The same scheme run with `-dt`.
    pub fn reversed(&self) -> Result<Self> {
        let mut config = self.config;
        config.dt = -config.dt;
        Self::with_potential_samples(&self.grid, self.potential.clone(), &self.nonlinearity, config)
    }

    fn pointwise(&self, values: &mut [C64], tau: f64) {
        let g = self.nonlinearity.multiplier(&self.grid, values);
        for ((v, vx), gx) in values.iter_mut().zip(&self.potential).zip(&g) {
            *v *= C64::from_polar(1.0, -tau * (vx - gx));
        }
    }

    fn kinetic(&self, values: &mut [C64]) {
        self.grid.fft(values);
        values
            .iter_mut()
            .zip(&self.kinetic_phase)
            .for_each(|(v, e)| *v *= e);
        if let Some(mask) = &self.mask {
            values
                .iter_mut()
                .zip(mask)
                .filter(|(_, keep)| !**keep)
                .for_each(|(v, _)| *v = C64::new(0.0, 0.0));
        }
        self.grid.ifft(values);
    }

    /// One Strang step: half pointwise flow, full kinetic flow, half pointwise flow.
    pub fn step(&self, state: &mut EvolutionState) -> Result<()> {
        if !state.psi.grid().is_compatible(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let half = 0.5 * self.config.dt;
        let values = state.psi.values_mut();
        self.pointwise(values, half);
        self.kinetic(values);
        self.pointwise(values, half);
        state.t += self.config.dt;
        if !state.psi.is_finite() {
            return Err(Error::NonFinite("wave function"));
        }
        Ok(())
    }

    fn step_count(&self, duration: f64) -> Result<usize> {
        if !(duration >= 0.0) {
            return Err(Error::InvalidParameter(format!("duration {duration}")));
        }
        let dt = self.config.dt.abs();
        let n = (duration / dt).round();
        if (n * dt - duration).abs() > 1e-9 * duration.max(dt) {
            return Err(Error::InvalidParameter(format!(
                "duration {duration} is not a multiple of the step {dt}"
            )));
        }
        Ok(n as usize)
    }

    /// Advances `psi0` for `duration` (a multiple of `|dt|`), calling `observer`
    /// on the initial state and after every `output_stride` steps.
    pub fn evolve_with(
        &self,
        psi0: &ComplexField,
        duration: f64,
        mut observer: impl FnMut(&EvolutionState) -> Result<()>,
    ) -> Result<EvolutionState> {
        let steps = self.step_count(duration)?;
        let mut state = EvolutionState {
            t: 0.0,
            psi: psi0.clone(),
        };
        observer(&state)?;
        for n in 1..=steps {
            self.step(&mut state)?;
            // Recompute to keep the time grid free of accumulated round-off.
            state.t = n as f64 * self.config.dt;
            if n % self.config.output_stride == 0 {
                observer(&state)?;
            }
        }
        Ok(state)
    }

    pub fn evolve(&self, psi0: &ComplexField, duration: f64) -> Result<Vec<EvolutionState>> {
        let mut out = Vec::new();
        self.evolve_with(psi0, duration, |s| {
            out.push(s.clone());
            Ok(())
        })?;
        Ok(out)
    }
}

fn dealias_mask(grid: &Grid) -> Vec<bool> {
    let k_max = grid.wavenumbers().iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let cut = 2.0 / 3.0 * k_max;
    let axes: Vec<Vec<f64>> = (0..grid.dim())
        .map(|ax| grid.wavevector_field(ax, false))
        .collect();
    (0..grid.len())
        .map(|i| axes.iter().all(|k| k[i].abs() <= cut))
        .collect()
}
