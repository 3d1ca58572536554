//! Semi-amortized simulation-based inference for stochastic mixed-effects models.
//!
//! Gaussian locally linear mixtures are trained on simulated `(θ, y)` pairs and
//! used as surrogate likelihoods and proposal distributions inside
//! Metropolis-within-Gibbs samplers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod mixtures;
pub mod models;
pub mod rng;
pub mod samplers;

pub use error::{Error, Result};
