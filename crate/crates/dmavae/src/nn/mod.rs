//! Differentiable-computation substrate: dense networks, reparameterized
//! Gaussian sampling, likelihood and KL terms, Adam, and a finite-difference
//! gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod linalg;
pub mod mlp;
pub mod stats;

pub use adam::AdamState;
pub use gradcheck::grad_check;
pub use linalg::{dot, Matrix, Vector};
pub use mlp::{Activation, Mlp};
pub use stats::{
    bernoulli_nll, categorical_nll, gaussian_nll, gaussian_reparam, kl_std_normal, log_sum_exp,
    logistic, softmax, softplus, LN_2PI,
};
