//! Gauge-invariant self-interactions written as `f(psi) = g(psi) psi` with a
//! real multiplier `g`, plus their primitives, linearizations and remainders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, C64};

/// Even, decaying two-body kernels for the nonlocal interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HartreeKernel {
    /// `exp(-|x|^2 / width^2)`
    Gaussian { width: f64 },
    /// `sech^2(|x| / width)`
    Sech2 { width: f64 },
}

impl HartreeKernel {
    pub fn eval(&self, r2: f64) -> f64 {
        match *self {
            HartreeKernel::Gaussian { width } => (-r2 / (width * width)).exp(),
            HartreeKernel::Sech2 { width } => {
                let c = (r2.sqrt() / width).cosh();
                1.0 / (c * c)
            }
        }
    }

    fn width(&self) -> f64 {
        match *self {
            HartreeKernel::Gaussian { width } | HartreeKernel::Sech2 { width } => width,
        }
    }

    /// Kernel sampled at the periodic distance of every node from the origin.
    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        let n = grid.points();
        let h = grid.spacing();
        (0..grid.len())
            .map(|i| {
                let r2: f64 = (0..grid.dim())
                    .map(|ax| {
                        let j = grid.axis_index(i, ax);
                        let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                        (m * h).powi(2)
                    })
                    .sum();
                self.eval(r2)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Nonlinearity {
    /// `lambda |psi|^s psi`
    LocalPower { lambda: f64, s: f64 },
    /// `beta |psi|^s1 psi + lambda |psi|^s2 psi`
    TwoPower {
        beta: f64,
        lambda: f64,
        s1: f64,
        s2: f64,
    },
    /// `lambda (Phi * |psi|^2) psi`
    Hartree { lambda: f64, kernel: HartreeKernel },
    /// No self-interaction; the linear Schrödinger limit.
    Zero,
}

/// `|psi|^s` through `exp(s ln|psi|)`, with vacuum points mapped to zero.
fn abs_pow(modulus: f64, s: f64) -> f64 {
    if s == 2.0 {
        modulus * modulus
    } else if modulus < 1e-300 {
        0.0
    } else {
        (s * modulus.ln()).exp()
    }
}

impl Nonlinearity {
    pub fn cubic(lambda: f64) -> Self {
        Nonlinearity::LocalPower { lambda, s: 2.0 }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let critical = 4.0 / dim as f64;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            Nonlinearity::LocalPower { lambda, s } => {
                if !(lambda > 0.0) {
                    return bad(format!("coupling {lambda} must be positive"));
                }
                if !(s > 0.0 && s < critical) {
                    return bad(format!("power {s} outside (0, {critical})"));
                }
            }
            Nonlinearity::TwoPower {
                beta,
                lambda,
                s1,
                s2,
            } => {
                if !(lambda > 0.0) || !beta.is_finite() {
                    return bad(format!("couplings ({beta}, {lambda})"));
                }
                if !(s1 > 0.0 && s1 < s2 && s2 < critical) {
                    return bad(format!("powers ({s1}, {s2}) must satisfy 0 < s1 < s2 < {critical}"));
                }
            }
            Nonlinearity::Hartree { lambda, kernel } => {
                if !(lambda > 0.0) {
                    return bad(format!("coupling {lambda} must be positive"));
                }
                if !(kernel.width() > 0.0) {
                    return bad(format!("kernel width {}", kernel.width()));
                }
            }
            Nonlinearity::Zero => {}
        }
        Ok(())
    }

    /// Real multiplier `g` with `f(psi) = g psi`.
    pub fn multiplier(&self, grid: &Grid, psi: &[C64]) -> Vec<f64> {
        match *self {
            Nonlinearity::LocalPower { lambda, s } => {
                psi.iter().map(|v| lambda * abs_pow(v.norm(), s)).collect()
            }
            Nonlinearity::TwoPower {
                beta,
                lambda,
                s1,
                s2,
            } => psi
                .iter()
                .map(|v| {
                    let m = v.norm();
                    beta * abs_pow(m, s1) + lambda * abs_pow(m, s2)
                })
                .collect(),
            Nonlinearity::Hartree { lambda, kernel } => {
                let rho: Vec<f64> = psi.iter().map(|v| v.norm_sqr()).collect();
                convolve(grid, &kernel, &rho)
                    .into_iter()
                    .map(|c| lambda * c)
                    .collect()
            }
            Nonlinearity::Zero => vec![0.0; psi.len()],
        }
    }

    fn apply_raw(&self, grid: &Grid, psi: &[C64]) -> Vec<C64> {
        self.multiplier(grid, psi)
            .iter()
            .zip(psi)
            .map(|(g, v)| v * g)
            .collect()
    }

    pub fn eval_f(&self, psi: &ComplexField) -> ComplexField {
        ComplexField::from_raw(psi.grid(), self.apply_raw(psi.grid(), psi.values()))
    }

    /// The primitive `F` with variational derivative `f`.
    pub fn eval_functional(&self, psi: &ComplexField) -> f64 {
        let grid = psi.grid();
        let hd = grid.cell_volume();
        let sum = match *self {
            Nonlinearity::LocalPower { lambda, s } => psi
                .values()
                .iter()
                .map(|v| lambda / (s + 2.0) * abs_pow(v.norm(), s + 2.0))
                .sum::<f64>(),
            Nonlinearity::TwoPower {
                beta,
                lambda,
                s1,
                s2,
            } => psi
                .values()
                .iter()
                .map(|v| {
                    let m = v.norm();
                    beta / (s1 + 2.0) * abs_pow(m, s1 + 2.0)
                        + lambda / (s2 + 2.0) * abs_pow(m, s2 + 2.0)
                })
                .sum::<f64>(),
            Nonlinearity::Hartree { .. } => {
                let g = self.multiplier(grid, psi.values());
                0.25 * g
                    .iter()
                    .zip(psi.values())
                    .map(|(g, v)| g * v.norm_sqr())
                    .sum::<f64>()
            }
            Nonlinearity::Zero => 0.0,
        };
        hd * sum
    }

    /// `f'(eta) w` for a real profile `eta`.
    pub fn derivative_apply(&self, eta: &[f64], w: &ComplexField) -> Result<ComplexField> {
        let grid = w.grid();
        check_len(grid, eta)?;
        let wv = w.values();
        let out: Vec<C64> = match *self {
            Nonlinearity::Hartree { lambda, kernel } => {
                let rho: Vec<f64> = eta.iter().map(|e| e * e).collect();
                let mixed: Vec<f64> = eta.iter().zip(wv).map(|(e, v)| e * v.re).collect();
                let g = convolve(grid, &kernel, &rho);
                let dg = convolve(grid, &kernel, &mixed);
                wv.iter()
                    .enumerate()
                    .map(|(i, v)| lambda * (g[i] * v + 2.0 * dg[i] * eta[i]))
                    .collect()
            }
            _ => {
                let (g, slope) = self.local_parts(eta);
                wv.iter()
                    .enumerate()
                    .map(|(i, v)| v * g[i] + slope[i] * v.re)
                    .collect()
            }
        };
        Ok(ComplexField::from_raw(grid, out))
    }

    /// `g(eta^2)` and `2 eta^2 g'(eta^2)` for the local variants.
    fn local_parts(&self, eta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut g = Vec::with_capacity(eta.len());
        let mut slope = Vec::with_capacity(eta.len());
        for &e in eta {
            let m = e.abs();
            let (gv, sv) = match *self {
                Nonlinearity::LocalPower { lambda, s } => {
                    let p = abs_pow(m, s);
                    (lambda * p, lambda * s * p)
                }
                Nonlinearity::TwoPower {
                    beta,
                    lambda,
                    s1,
                    s2,
                } => {
                    let p1 = abs_pow(m, s1);
                    let p2 = abs_pow(m, s2);
                    (beta * p1 + lambda * p2, beta * s1 * p1 + lambda * s2 * p2)
                }
                _ => (0.0, 0.0),
            };
            g.push(gv);
            slope.push(sv);
        }
        (g, slope)
    }

    /// `L w = -Δw + mu w - f'(eta) w`.
    pub fn linearized_apply(&self, eta: &[f64], mu: f64, w: &ComplexField) -> Result<ComplexField> {
        let grid = w.grid();
        let fw = self.derivative_apply(eta, w)?;
        let lap = grid.laplacian(w.values());
        let out = w
            .values()
            .iter()
            .zip(&lap)
            .zip(fw.values())
            .map(|((v, l), f)| -l + mu * v - f)
            .collect();
        Ok(ComplexField::from_raw(grid, out))
    }

    /// `N(w) = -f(eta + w) + f(eta) + f'(eta) w`.
    pub fn remainder_n(&self, eta: &[f64], w: &ComplexField) -> Result<ComplexField> {
        let grid = w.grid();
        check_len(grid, eta)?;
        let shifted: Vec<C64> = eta
            .iter()
            .zip(w.values())
            .map(|(e, v)| v + e)
            .collect();
        let base: Vec<C64> = eta.iter().map(|&e| C64::new(e, 0.0)).collect();
        let f_shift = self.apply_raw(grid, &shifted);
        let f_base = self.apply_raw(grid, &base);
        let lin = self.derivative_apply(eta, w)?;
        let out = f_shift
            .iter()
            .zip(&f_base)
            .zip(lin.values())
            .map(|((a, b), c)| -a + b + c)
            .collect();
        Ok(ComplexField::from_raw(grid, out))
    }
}

fn check_len(grid: &Grid, eta: &[f64]) -> Result<()> {
    if eta.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: eta.len(),
        });
    }
    Ok(())
}

/// Periodic convolution `h^d sum_j Phi(x_i - x_j) rho_j` through the FFT.
pub fn convolve(grid: &Grid, kernel: &HartreeKernel, rho: &[f64]) -> Vec<f64> {
    let mut k: Vec<C64> = kernel
        .sample(grid)
        .into_iter()
        .map(|v| C64::new(v, 0.0))
        .collect();
    grid.fft(&mut k);
    let mut r: Vec<C64> = rho.iter().map(|&v| C64::new(v, 0.0)).collect();
    grid.fft(&mut r);
    r.iter_mut().zip(&k).for_each(|(a, b)| *a *= b);
    grid.ifft(&mut r);
    let hd = grid.cell_volume();
    r.into_iter().map(|v| hd * v.re).collect()
}
