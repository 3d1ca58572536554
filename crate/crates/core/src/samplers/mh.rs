use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mixtures::ConditionedPosterior;

/// A state-independent proposal distribution.
pub trait IndependenceProposal {
    fn draw(&self, rng: &mut dyn rand::RngCore) -> Vec<f64>;
    fn log_density(&self, x: &[f64]) -> f64;
}

impl IndependenceProposal for ConditionedPosterior {
    fn draw(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        self.sample(rng).as_slice().to_vec()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        self.logpdf(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhStep {
    pub next: Vec<f64>,
    pub accepted: bool,
    /// Target at the returned point.
    pub log_target: f64,
    /// The proposal gave a NaN target and was rejected.
    pub invalid: bool,
}

/// Running acceptance and warning tallies for one kernel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MhCounters {
    pub proposed: u64,
    pub accepted: u64,
    pub invalid: u64,
}

impl MhCounters {
    pub fn record(&mut self, s: &MhStep) {
        self.proposed += 1;
        self.accepted += s.accepted as u64;
        self.invalid += s.invalid as u64;
    }

    pub fn merge(&mut self, other: &MhCounters) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
        self.invalid += other.invalid;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One independence Metropolis-Hastings transition.
///
/// Acceptance is `min(1, t(x*) q(x) / (t(x) q(x*)))`. A proposal whose target is
/// `-inf` (outside the prior support) or NaN is rejected.
pub fn independence_mh_step<P, R>(
    current: &[f64],
    log_target: impl Fn(&[f64]) -> f64,
    proposal: &P,
    rng: &mut R,
) -> MhStep
where
    P: IndependenceProposal + ?Sized,
    R: Rng,
{
    let cur_t = log_target(current);
    let cand = proposal.draw(rng);
    let cand_t = log_target(&cand);
    let u: f64 = rng.random();
    let reject = |invalid| MhStep {
        next: current.to_vec(),
        accepted: false,
        log_target: cur_t,
        invalid,
    };
    if cand_t.is_nan() {
        return reject(true);
    }
    if cand_t == f64::NEG_INFINITY {
        return reject(false);
    }
    if cand == current {
        return MhStep {
            next: cand,
            accepted: true,
            log_target: cand_t,
            invalid: false,
        };
    }
    let log_alpha = if cur_t.is_finite() {
        cand_t - cur_t + proposal.log_density(current) - proposal.log_density(&cand)
    } else {
        f64::INFINITY
    };
    if log_alpha.is_nan() {
        return reject(true);
    }
    if log_alpha >= 0.0 || u.ln() < log_alpha {
        MhStep {
            next: cand,
            accepted: true,
            log_target: cand_t,
            invalid: false,
        }
    } else {
        reject(false)
    }
}
