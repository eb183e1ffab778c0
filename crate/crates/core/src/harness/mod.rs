//! Configuration, runs, persistence and the command-line driver's building blocks.

pub mod config;
pub mod experiments;
pub mod lemmas;
pub mod persistence;
