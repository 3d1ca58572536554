//! SeMPLE rounds, the Metropolis-within-Gibbs sweeps and the exact OU reference sampler.

mod checkpoint;
mod exact;
mod gibbs;
mod likelihood;
mod run;
mod samples;
#[cfg(test)]
mod scenarios;

pub use exact::{run_exact_reference, run_exact_reference_ou, ExactConfig, ExactOutput};
pub use gibbs::{
    eta_step, gibbs_round_three_step, gibbs_round_two_step, round0, round1, GibbsContext,
    GibbsKernels, GibbsOutput, Round0Output, Round1Output,
};
pub use likelihood::{IndividualLikelihood, KalmanLikelihood, SurrogateLikelihood};
pub use run::{run_semple, PriorPredictiveReport, RoundReport, RunOutput};
pub use samples::{
    format_samples, parse_samples, read_samples, sample_columns, write_samples, SampleTable,
};

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::mixtures::{CovStructure, EmConfig};
use crate::models::{PopulationParams, ThetaLayout};
use crate::rng::{stream, tag};
use crate::samplers::HmcConfig;
use rand::RngCore;

/// Gibbs scheme used in rounds `r ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Random effects, shared parameters by HMC, then population parameters.
    #[default]
    ThreeStep,
    /// Every parameter is a random effect; no shared-parameter block.
    TwoStep,
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "three_step" | "three-step" => Ok(Variant::ThreeStep),
            "two_step" | "two-step" => Ok(Variant::TwoStep),
            other => input(format!(
                "unknown variant {other:?} (expected three_step or two_step)"
            )),
        }
    }
}

fn default_em_max_iter() -> usize {
    1000
}
fn default_em_tol() -> f64 {
    1e-8
}

/// Settings of one SeMPLE run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Prior-predictive pairs in round 0 and surrogate-posterior draws in round 1.
    pub n_prior: usize,
    /// Gibbs sweeps per round.
    pub n_gibbs: usize,
    /// Index of the last round; Gibbs rounds are `2..=rounds`.
    pub rounds: usize,
    pub k_init: usize,
    /// When nonempty, round 0 picks K from this grid by BIC and later rounds reuse it.
    #[serde(default)]
    pub k_grid: Vec<usize>,
    #[serde(default)]
    pub cov_structure: CovStructure,
    pub seed: u64,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub hmc: HmcConfig,
    #[serde(default = "default_em_max_iter")]
    pub em_max_iter: usize,
    #[serde(default = "default_em_tol")]
    pub em_tol: f64,
    /// Leading sweeps of the final round dropped from the reported samples.
    #[serde(default)]
    pub discard: usize,
    /// Simulate and refit after the final round as well.
    #[serde(default)]
    pub refit_final: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_prior: 1000,
            n_gibbs: 1000,
            rounds: 3,
            k_init: 10,
            k_grid: Vec::new(),
            cov_structure: CovStructure::Full,
            seed: 0,
            variant: Variant::ThreeStep,
            hmc: HmcConfig {
                adapt_iters: 1000,
                ..HmcConfig::default()
            },
            em_max_iter: 1000,
            em_tol: 1e-8,
            discard: 0,
            refit_final: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self, n_individuals: usize, layout: ThetaLayout) -> Result<()> {
        if n_individuals == 0 {
            return input("at least one observed individual is required");
        }
        if self.n_prior == 0 || !self.n_prior.is_multiple_of(n_individuals) {
            return input(format!(
                "N = {} must be a positive multiple of M = {n_individuals}",
                self.n_prior
            ));
        }
        if self.rounds < 2 {
            return input("R must be at least 2");
        }
        if self.n_gibbs == 0 {
            return input("N_g must be positive");
        }
        if self.k_init == 0 || self.k_grid.contains(&0) {
            return input("component counts must be positive");
        }
        if self.discard >= self.n_gibbs {
            return input("discard must be smaller than N_g");
        }
        if self.variant == Variant::TwoStep && layout.shared() != 0 {
            return input("the two-step variant needs a layout without shared parameters");
        }
        if !(self.em_tol > 0.0) {
            return input("EM tolerance must be positive");
        }
        self.hmc.validate()
    }

    /// EM settings for the fit that closes round `round`.
    pub fn em_config(&self, k: usize, round: usize) -> EmConfig {
        EmConfig {
            k_init: k,
            cov_structure: self.cov_structure,
            seed: stream(self.seed, &[tag::EM_INIT, round as u64]).next_u64(),
            max_iter: self.em_max_iter,
            tol: self.em_tol,
            ..EmConfig::default()
        }
    }
}

/// Full Gibbs state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub c_all: Vec<Vec<f64>>,
    pub kappa: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: PopulationParams,
    pub sweep: usize,
    pub round: usize,
}

impl ChainState {
    pub fn shared(&self) -> Vec<f64> {
        let mut v = self.kappa.clone();
        v.extend_from_slice(&self.xi);
        v
    }

    pub fn set_shared(&mut self, shared: &[f64]) {
        let p = self.kappa.len();
        self.kappa.copy_from_slice(&shared[..p]);
        self.xi.copy_from_slice(&shared[p..]);
    }

    /// Parameter vector `(c⁽ⁱ⁾, κ, ξ)` of individual `i`.
    pub fn theta(&self, i: usize) -> Vec<f64> {
        let mut v = self.c_all[i].clone();
        v.extend_from_slice(&self.kappa);
        v.extend_from_slice(&self.xi);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.c_all
            .iter()
            .flatten()
            .chain(&self.kappa)
            .chain(&self.xi)
            .chain(&self.eta.mu)
            .all(|v| v.is_finite())
            && self.eta.tau.iter().all(|t| *t > 0.0 && t.is_finite())
    }
}
