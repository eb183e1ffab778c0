//! Flat `key = value` run configuration with dotted keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decomposition::ModulationState;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::nonlinearity::{HartreeKernel, Nonlinearity};
use crate::potential::{PotentialFamily, PotentialSpec};
use crate::profile::{CubicFamily, ProfileFamily, SolvedFamily, SolverOptions};
use crate::propagator::PropagatorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    None,
    /// Smooth noise on the symplectic complement with energy norm `amplitude`.
    SkewOrthogonalNoise { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub points: usize,
    pub half_length: f64,
    pub nonlinearity: Nonlinearity,
    pub potential: PotentialFamily,
    pub eps_v: f64,
    pub a0: Vec<f64>,
    pub p0: Vec<f64>,
    pub gamma0: f64,
    pub mu0: f64,
    pub perturbation: Perturbation,
    pub dt: f64,
    pub t_final: f64,
    pub output_stride: usize,
    pub dealias: bool,
    pub decomposition_tol: f64,
    pub tube: f64,
    pub profile_tol: f64,
    pub seed: u64,
    pub save_psi: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            points: 512,
            half_length: 40.0,
            nonlinearity: Nonlinearity::cubic(1.0),
            potential: PotentialFamily::Quadratic {
                a: vec![1.0],
                v: vec![0.0],
                c: 0.0,
            },
            eps_v: 0.05,
            a0: vec![1.0],
            p0: vec![0.1],
            gamma0: 0.0,
            mu0: 1.0,
            perturbation: Perturbation::None,
            dt: 1e-3,
            t_final: 1.0,
            output_stride: 10,
            dealias: false,
            decomposition_tol: 1e-12,
            tube: 0.2,
            profile_tol: 1e-10,
            seed: 1,
            save_psi: false,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|e| Error::Config(format!("{key}: {v:?} is not a number ({e})")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|e| Error::Config(format!("{key}: {v:?} is not a count ({e})")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse_f64(key, t))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("{key}: {other:?} is not a boolean"))),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {}", n + 1, k.trim())));
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = parse_pairs(text)?;
        let mut c = Self::default();
        let mut take = |k: &str| pairs.remove(k);

        if let Some(v) = take("grid.dim") {
            c.dim = parse_usize("grid.dim", &v)?;
        }
        if let Some(v) = take("grid.N") {
            c.points = parse_usize("grid.N", &v)?;
        }
        if let Some(v) = take("grid.L") {
            c.half_length = parse_f64("grid.L", &v)?;
        }

        let kind = take("nonlinearity.kind").unwrap_or_else(|| "cubic".into());
        let lambda = take("nonlinearity.lambda").map(|v| parse_f64("nonlinearity.lambda", &v)).transpose()?;
        let s = take("nonlinearity.s").map(|v| parse_f64("nonlinearity.s", &v)).transpose()?;
        let beta = take("nonlinearity.beta").map(|v| parse_f64("nonlinearity.beta", &v)).transpose()?;
        let s1 = take("nonlinearity.s1").map(|v| parse_f64("nonlinearity.s1", &v)).transpose()?;
        let s2 = take("nonlinearity.s2").map(|v| parse_f64("nonlinearity.s2", &v)).transpose()?;
        let width = take("nonlinearity.width").map(|v| parse_f64("nonlinearity.width", &v)).transpose()?;
        let need = |x: Option<f64>, name: &str| {
            x.ok_or_else(|| Error::Config(format!("nonlinearity.{name} is required for {kind}")))
        };
        c.nonlinearity = match kind.as_str() {
            "cubic" => Nonlinearity::cubic(lambda.unwrap_or(1.0)),
            "local_power" => Nonlinearity::LocalPower {
                lambda: lambda.unwrap_or(1.0),
                s: need(s, "s")?,
            },
            "two_power" => Nonlinearity::TwoPower {
                beta: need(beta, "beta")?,
                lambda: lambda.unwrap_or(1.0),
                s1: need(s1, "s1")?,
                s2: need(s2, "s2")?,
            },
            "hartree_gaussian" => Nonlinearity::Hartree {
                lambda: lambda.unwrap_or(1.0),
                kernel: HartreeKernel::Gaussian { width: need(width, "width")? },
            },
            "hartree_sech2" => Nonlinearity::Hartree {
                lambda: lambda.unwrap_or(1.0),
                kernel: HartreeKernel::Sech2 { width: need(width, "width")? },
            },
            "zero" => Nonlinearity::Zero,
            other => return Err(Error::Config(format!("unknown nonlinearity.kind {other:?}"))),
        };

        let family = take("potential.family").unwrap_or_else(|| "harmonic".into());
        if let Some(v) = take("potential.eps_v") {
            c.eps_v = parse_f64("potential.eps_v", &v)?;
        }
        let matrix = take("potential.A").map(|v| parse_list("potential.A", &v)).transpose()?;
        let linear = take("potential.v").map(|v| parse_list("potential.v", &v)).transpose()?;
        let constant = take("potential.c").map(|v| parse_f64("potential.c", &v)).transpose()?;
        let c2 = take("potential.c2").map(|v| parse_f64("potential.c2", &v)).transpose()?;
        let c4 = take("potential.c4").map(|v| parse_f64("potential.c4", &v)).transpose()?;
        let r = take("potential.r").map(|v| parse_f64("potential.r", &v)).transpose()?;
        let d = c.dim;
        c.potential = match family.as_str() {
            "harmonic" => {
                let mut a = vec![0.0; d * d];
                (0..d).for_each(|i| a[i * d + i] = 1.0);
                PotentialFamily::Quadratic {
                    a,
                    v: vec![0.0; d],
                    c: 0.0,
                }
            }
            "quadratic" => PotentialFamily::Quadratic {
                a: matrix.ok_or_else(|| Error::Config("potential.A is required".into()))?,
                v: linear.unwrap_or_else(|| vec![0.0; d]),
                c: constant.unwrap_or(0.0),
            },
            "even_quartic" => PotentialFamily::EvenQuartic {
                c2: c2.ok_or_else(|| Error::Config("potential.c2 is required".into()))?,
                c4: c4.ok_or_else(|| Error::Config("potential.c4 is required".into()))?,
            },
            "zero" => PotentialFamily::Zero,
            other => return Err(Error::Config(format!("unknown potential.family {other:?}"))),
        };

        if let Some(v) = take("initial.a") {
            c.a0 = parse_list("initial.a", &v)?;
        } else {
            c.a0 = vec![0.0; d];
        }
        if let Some(v) = take("initial.p") {
            c.p0 = parse_list("initial.p", &v)?;
        } else {
            c.p0 = vec![0.0; d];
        }
        if let Some(v) = take("initial.gamma") {
            c.gamma0 = parse_f64("initial.gamma", &v)?;
        }
        if let Some(v) = take("initial.mu") {
            c.mu0 = parse_f64("initial.mu", &v)?;
        }
        let pert = take("perturbation.kind").unwrap_or_else(|| "none".into());
        let amp = take("perturbation.amplitude")
            .map(|v| parse_f64("perturbation.amplitude", &v))
            .transpose()?;
        c.perturbation = match pert.as_str() {
            "none" => Perturbation::None,
            "skew_noise" => Perturbation::SkewOrthogonalNoise {
                amplitude: amp.ok_or_else(|| Error::Config("perturbation.amplitude is required".into()))?,
            },
            other => return Err(Error::Config(format!("unknown perturbation.kind {other:?}"))),
        };
        if let Some(v) = take("propagator.dt") {
            c.dt = parse_f64("propagator.dt", &v)?;
        }
        if let Some(v) = take("propagator.T") {
            c.t_final = parse_f64("propagator.T", &v)?;
        }
        if let Some(v) = take("propagator.output_stride") {
            c.output_stride = parse_usize("propagator.output_stride", &v)?;
        }
        if let Some(v) = take("propagator.dealias") {
            c.dealias = parse_bool("propagator.dealias", &v)?;
        }
        if let Some(v) = take("tolerance.decomposition") {
            c.decomposition_tol = parse_f64("tolerance.decomposition", &v)?;
        }
        if let Some(v) = take("tolerance.tube") {
            c.tube = parse_f64("tolerance.tube", &v)?;
        }
        if let Some(v) = take("tolerance.profile") {
            c.profile_tol = parse_f64("tolerance.profile", &v)?;
        }
        if let Some(v) = take("rng.seed") {
            c.seed = v
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("rng.seed: {v:?} ({e})")))?;
        }
        if let Some(v) = take("output.save_psi") {
            c.save_psi = parse_bool("output.save_psi", &v)?;
        }
        if let Some(key) = pairs.keys().next() {
            return Err(Error::Config(format!("unknown key {key}")));
        }
        c.validate()?;
        if let Some(r) = r {
            let actual = c.potential_spec()?.growth_rate();
            if r != actual {
                return Err(Error::Config(format!(
                    "potential.r = {r} but the {family} family grows at rate {actual}"
                )));
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a0.len() != self.dim || self.p0.len() != self.dim {
            return Err(Error::Config(format!(
                "initial.a and initial.p need {} components",
                self.dim
            )));
        }
        if !(self.dt > 0.0) || !(self.t_final >= 0.0) || self.output_stride == 0 {
            return Err(Error::Config("propagator settings must be positive".into()));
        }
        self.nonlinearity.validate(self.dim)?;
        self.grid()?;
        self.potential_spec()?;
        Ok(())
    }

    /// Serializes to the text format accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("grid.dim", self.dim.to_string());
        put("grid.N", self.points.to_string());
        put("grid.L", format!("{:?}", self.half_length));
        match &self.nonlinearity {
            Nonlinearity::LocalPower { lambda, s } => {
                put("nonlinearity.kind", "local_power".into());
                put("nonlinearity.lambda", format!("{lambda:?}"));
                put("nonlinearity.s", format!("{s:?}"));
            }
            Nonlinearity::TwoPower { beta, lambda, s1, s2 } => {
                put("nonlinearity.kind", "two_power".into());
                put("nonlinearity.beta", format!("{beta:?}"));
                put("nonlinearity.lambda", format!("{lambda:?}"));
                put("nonlinearity.s1", format!("{s1:?}"));
                put("nonlinearity.s2", format!("{s2:?}"));
            }
            Nonlinearity::Hartree { lambda, kernel } => {
                let (name, width) = match kernel {
                    HartreeKernel::Gaussian { width } => ("hartree_gaussian", width),
                    HartreeKernel::Sech2 { width } => ("hartree_sech2", width),
                };
                put("nonlinearity.kind", name.into());
                put("nonlinearity.lambda", format!("{lambda:?}"));
                put("nonlinearity.width", format!("{width:?}"));
            }
            Nonlinearity::Zero => put("nonlinearity.kind", "zero".into()),
        }
        match &self.potential {
            PotentialFamily::Quadratic { a, v, c } => {
                put("potential.family", "quadratic".into());
                put("potential.A", join(a));
                put("potential.v", join(v));
                put("potential.c", format!("{c:?}"));
            }
            PotentialFamily::EvenQuartic { c2, c4 } => {
                put("potential.family", "even_quartic".into());
                put("potential.c2", format!("{c2:?}"));
                put("potential.c4", format!("{c4:?}"));
            }
            PotentialFamily::Zero => put("potential.family", "zero".into()),
        }
        put("potential.eps_v", format!("{:?}", self.eps_v));
        put("initial.a", join(&self.a0));
        put("initial.p", join(&self.p0));
        put("initial.gamma", format!("{:?}", self.gamma0));
        put("initial.mu", format!("{:?}", self.mu0));
        match self.perturbation {
            Perturbation::None => put("perturbation.kind", "none".into()),
            Perturbation::SkewOrthogonalNoise { amplitude } => {
                put("perturbation.kind", "skew_noise".into());
                put("perturbation.amplitude", format!("{amplitude:?}"));
            }
        }
        put("propagator.dt", format!("{:?}", self.dt));
        put("propagator.T", format!("{:?}", self.t_final));
        put("propagator.output_stride", self.output_stride.to_string());
        put("propagator.dealias", self.dealias.to_string());
        put("tolerance.decomposition", format!("{:?}", self.decomposition_tol));
        put("tolerance.tube", format!("{:?}", self.tube));
        put("tolerance.profile", format!("{:?}", self.profile_tol));
        put("rng.seed", self.seed.to_string());
        put("output.save_psi", self.save_psi.to_string());
        s
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::build(self.dim, self.points, self.half_length)
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        match self.potential {
            PotentialFamily::Zero => Ok(PotentialSpec::zero(self.dim)),
            _ => PotentialSpec::new(self.dim, self.potential.clone(), self.eps_v),
        }
    }

    pub fn propagator_config(&self) -> PropagatorConfig {
        PropagatorConfig {
            dt: self.dt,
            output_stride: self.output_stride,
            dealias: self.dealias,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.profile_tol,
            ..SolverOptions::default()
        }
    }

    /// The closed-form family for the one-dimensional cubic case, otherwise a
    /// numerically solved one.
    pub fn family(&self, grid: &Grid) -> Result<Arc<dyn ProfileFamily>> {
        match self.nonlinearity {
            Nonlinearity::LocalPower { lambda, s } if s == 2.0 && self.dim == 1 => {
                Ok(Arc::new(CubicFamily::new(grid, lambda)?))
            }
            _ => Ok(Arc::new(
                SolvedFamily::new(grid, self.nonlinearity.clone())?.with_options(self.solver_options()),
            )),
        }
    }

    pub fn initial_state(&self) -> Result<ModulationState> {
        ModulationState::new(self.a0.clone(), self.p0.clone(), self.gamma0, self.mu0)
    }

    /// Initial perturbation size `ε₀`.
    pub fn eps0(&self) -> f64 {
        match self.perturbation {
            Perturbation::None => 0.0,
            Perturbation::SkewOrthogonalNoise { amplitude } => amplitude,
        }
    }

    /// `ε = ε_V + ε₀`
    pub fn eps(&self) -> f64 {
        self.eps_v + self.eps0()
    }

    /// `ε_h = h(a₀, p₀)`
    pub fn eps_h(&self) -> Result<f64> {
        let v = self.potential_spec()?;
        Ok(0.5 * (self.p0.iter().map(|x| x * x).sum::<f64>() + v.eval_v(&self.a0)))
    }
}
