use crate::error::Result;
use crate::mixtures::{ExpertMixture, ObservedLikelihood};
use crate::models::{ou_kalman_loglik, IndividualRecord};

/// Per-individual log-likelihood `θ ↦ log p(y_o⁽ⁱ⁾ | θ)` used inside the Gibbs steps.
pub trait IndividualLikelihood: Sync {
    fn n_individuals(&self) -> usize;
    fn loglik(&self, i: usize, theta: &[f64]) -> f64;

    /// Value and gradient. The default uses central differences with step `1e-5`.
    fn loglik_grad(&self, i: usize, theta: &[f64]) -> (f64, Vec<f64>) {
        let h = 1e-5;
        let mut x = theta.to_vec();
        let g = (0..theta.len())
            .map(|k| {
                x[k] = theta[k] + h;
                let up = self.loglik(i, &x);
                x[k] = theta[k] - h;
                let down = self.loglik(i, &x);
                x[k] = theta[k];
                (up - down) / (2.0 * h)
            })
            .collect();
        (self.loglik(i, theta), g)
    }
}

/// Surrogate likelihoods with each individual's observation plugged in.
#[derive(Debug, Clone)]
pub struct SurrogateLikelihood {
    observed: Vec<ObservedLikelihood>,
}

impl SurrogateLikelihood {
    pub fn new(mixture: &ExpertMixture, records: &[IndividualRecord]) -> Result<Self> {
        let observed = records
            .iter()
            .map(|r| mixture.observe(r.flat()))
            .collect::<Result<_>>()?;
        Ok(Self { observed })
    }
}

impl IndividualLikelihood for SurrogateLikelihood {
    fn n_individuals(&self) -> usize {
        self.observed.len()
    }
    fn loglik(&self, i: usize, theta: &[f64]) -> f64 {
        self.observed[i].loglik(theta)
    }
    fn loglik_grad(&self, i: usize, theta: &[f64]) -> (f64, Vec<f64>) {
        let (v, g) = self.observed[i].grad(theta);
        (v, g.as_slice().to_vec())
    }
}

/// Exact OU likelihood by Kalman filtering, θ = `(log c₁, log c₂, log c₃, log ξ)`.
#[derive(Debug, Clone)]
pub struct KalmanLikelihood<'a> {
    records: &'a [IndividualRecord],
}

impl<'a> KalmanLikelihood<'a> {
    pub fn new(records: &'a [IndividualRecord]) -> Self {
        Self { records }
    }
}

impl IndividualLikelihood for KalmanLikelihood<'_> {
    fn n_individuals(&self) -> usize {
        self.records.len()
    }
    fn loglik(&self, i: usize, theta: &[f64]) -> f64 {
        let r = &self.records[i];
        ou_kalman_loglik(&r.times, r.flat(), theta)
    }
}
