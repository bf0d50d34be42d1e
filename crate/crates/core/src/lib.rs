//! Constrained parallel Bayesian optimization for application autotuning.
//!
//! A campaign minimizes a black-box objective over an integer knob space
//! subject to an upper bound on a quality metric. Strategies live in
//! [`optimizers`]; [`campaign`] wires them to targets and output files.

pub mod acquisition;
pub mod campaign;
pub mod constraint;
pub mod error;
pub mod executor;
pub mod gp;
pub mod knobspace;
pub mod optimizers;
pub mod report;
pub mod target;
pub mod transcript;

pub use error::{Error, Result};
