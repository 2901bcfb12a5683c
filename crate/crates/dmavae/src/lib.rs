//! Causal mediation analysis under latent confounding.
//!
//! The crate generates synthetic structural-causal-model data with known
//! ground-truth natural effects, trains a disentangled variational model
//! over proxy attributes, estimates natural direct/indirect and total
//! effects from the learned representations, and benchmarks the estimators
//! against a linear structural-equation baseline.

pub mod adult;
pub mod baselines;
pub mod bench;
pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod nn;
pub mod scm;
pub mod train;
pub mod util;

pub use error::{Error, Result};
