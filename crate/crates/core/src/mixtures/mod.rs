//! Joint Gaussian mixtures of locally linear experts.
//!
//! An [`ExpertMixture`] models `θ ~ Σ π_k N(ν̃_k, Γ̃_k)` and `y | θ, k ~ N(Ã_k θ + b̃_k, Σ̃_k)`.
//! It provides the surrogate likelihood `q̃(y | θ)`. Its closed-form
//! [`InverseMixture`] provides the surrogate posterior `q(θ | y)`, which is
//! also a Gaussian mixture and can be sampled directly.

mod bic;
mod em;
pub(crate) mod expert;
mod inverse;
mod io;

pub use bic::{bic, select_k_bic, select_k_bic_with, BicRow};
pub use em::{fit_em, EmConfig, EmFit};
pub use expert::{param_count, ExpertMixture, ObservedLikelihood};
pub use inverse::{ConditionedPosterior, InverseMixture};
pub use io::{read_mixture, write_mixture, MixtureFile, MIXTURE_FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

/// Covariance parameterization of the noise matrices `Σ̃_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CovStructure {
    #[default]
    Full,
    Diagonal,
}

impl std::str::FromStr for CovStructure {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "diagonal" => Ok(Self::Diagonal),
            other => input(format!(
                "unknown covariance structure `{other}` (expected full|diagonal)"
            )),
        }
    }
}

/// Training pairs `(θ_j, y_j)` stored pair-major, so the buffers are the
/// column-major `l × N` and `D × N` matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    theta_dim: usize,
    obs_dim: usize,
    theta: Vec<f64>,
    y: Vec<f64>,
    pub round_tag: usize,
}

impl TrainingSet {
    pub fn new(theta_dim: usize, obs_dim: usize, round_tag: usize) -> Self {
        Self {
            theta_dim,
            obs_dim,
            theta: Vec::new(),
            y: Vec::new(),
            round_tag,
        }
    }

    pub fn with_capacity(theta_dim: usize, obs_dim: usize, round_tag: usize, n: usize) -> Self {
        Self {
            theta_dim,
            obs_dim,
            theta: Vec::with_capacity(n * theta_dim),
            y: Vec::with_capacity(n * obs_dim),
            round_tag,
        }
    }

    pub fn push(&mut self, theta: &[f64], y: &[f64]) -> Result<()> {
        if theta.len() != self.theta_dim || y.len() != self.obs_dim {
            return input(format!(
                "training pair has dims ({}, {}), expected ({}, {})",
                theta.len(),
                y.len(),
                self.theta_dim,
                self.obs_dim
            ));
        }
        if theta.iter().chain(y).any(|v| !v.is_finite()) {
            return input("training pair contains non-finite entries");
        }
        self.theta.extend_from_slice(theta);
        self.y.extend_from_slice(y);
        Ok(())
    }

    /// Append every pair of `other`; dimensions must agree.
    pub fn extend(&mut self, other: &TrainingSet) -> Result<()> {
        if other.theta_dim != self.theta_dim || other.obs_dim != self.obs_dim {
            return input("cannot merge training sets with different dimensions");
        }
        self.theta.extend_from_slice(&other.theta);
        self.y.extend_from_slice(&other.y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        if self.theta_dim == 0 {
            0
        } else {
            self.theta.len() / self.theta_dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn theta(&self, j: usize) -> &[f64] {
        &self.theta[j * self.theta_dim..(j + 1) * self.theta_dim]
    }

    pub fn y(&self, j: usize) -> &[f64] {
        &self.y[j * self.obs_dim..(j + 1) * self.obs_dim]
    }

    /// Rebuild from pair-major buffers.
    pub(crate) fn from_buffers(
        theta_dim: usize,
        obs_dim: usize,
        round_tag: usize,
        theta: Vec<f64>,
        y: Vec<f64>,
    ) -> Result<Self> {
        if theta_dim == 0
            || obs_dim == 0
            || !theta.len().is_multiple_of(theta_dim)
            || !y.len().is_multiple_of(obs_dim)
            || theta.len() / theta_dim != y.len() / obs_dim
        {
            return input("training buffers have inconsistent lengths");
        }
        Ok(Self {
            theta_dim,
            obs_dim,
            theta,
            y,
            round_tag,
        })
    }

    pub(crate) fn theta_buf(&self) -> &[f64] {
        &self.theta
    }

    pub(crate) fn y_buf(&self) -> &[f64] {
        &self.y
    }
}
