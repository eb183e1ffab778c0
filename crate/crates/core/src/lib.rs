//! Solitary waves of nonlinear Schrödinger equations in slowly varying
//! confining potentials: profiles, split-step evolution, modulation tracking
//! and the diagnostics that check the effective point-particle dynamics.

pub mod decomposition;
pub mod diagnostics;
pub mod error;
pub mod exactfamily;
pub mod grid;
pub mod harness;
mod linalg;
pub mod modulation;
pub mod nonlinearity;
pub mod potential;
pub mod profile;
pub mod propagator;

pub use error::{Error, Result};
