use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gibbs::eta_step;
use super::likelihood::{IndividualLikelihood, KalmanLikelihood};
use super::ChainState;
use crate::error::{input, Result};
use crate::linalg::cholesky_lower;
use crate::models::{IndividualRecord, PopulationParams, PopulationPrior, PriorSpec, ThetaLayout};
use crate::rng::{stream, tag, SimRng};
use crate::samplers::{Hmc, HmcConfig};

fn default_thin() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// HMC settings for population coordinates without a Normal–Gamma prior.
    #[serde(default)]
    pub hmc: HmcConfig,
}

#[derive(Debug, Clone)]
pub struct ExactOutput {
    pub samples: Vec<ChainState>,
    pub step1_acceptance: Vec<f64>,
    pub shared_acceptance: Option<f64>,
    pub wall_secs: f64,
}

/// Gaussian random walk whose covariance follows the chain's empirical covariance
/// and whose global scale is tuned toward acceptance 0.234. Adaptation stops with burn-in.
#[derive(Debug, Clone)]
struct AdaptiveWalk {
    n: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_scale: f64,
}

impl AdaptiveWalk {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
            chol: DMatrix::identity(dim, dim) * 0.1,
            log_scale: 0.0,
        }
    }

    fn propose(&self, x: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let z = DVector::from_fn(x.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = &self.chol * z * self.log_scale.exp();
        x.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
    }

    fn adapt(&mut self, x: &[f64], accept_prob: f64) {
        let d = x.len();
        self.n += 1;
        let xv = DVector::from_column_slice(x);
        let delta = &xv - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = &xv - &self.mean;
        self.scatter += &delta * delta2.transpose();
        self.log_scale += (accept_prob - 0.234) / (self.n as f64).powf(0.6);
        self.log_scale = self.log_scale.clamp(-10.0, 5.0);
        if self.n > 20 * d && self.n.is_multiple_of(50) {
            let mut cov = &self.scatter / (self.n - 1) as f64 * (2.38 * 2.38 / d as f64);
            let floor = 1e-10 * (1.0 + cov.trace() / d as f64);
            for k in 0..d {
                cov[(k, k)] += floor;
            }
            if let Some(l) = cholesky_lower(&cov) {
                self.chol = l;
            }
        }
    }
}

/// One random-walk Metropolis transition; returns the new point and the acceptance probability.
fn walk_step(
    x: &[f64],
    target: impl Fn(&[f64]) -> f64,
    walk: &AdaptiveWalk,
    rng: &mut SimRng,
) -> (Vec<f64>, f64) {
    let cur = target(x);
    let cand = walk.propose(x, rng);
    let new = target(&cand);
    let u: f64 = rng.random();
    let alpha = if new.is_nan() || new == f64::NEG_INFINITY {
        0.0
    } else if !cur.is_finite() {
        1.0
    } else {
        (new - cur).exp().min(1.0)
    };
    if u < alpha {
        (cand, alpha)
    } else {
        (x.to_vec(), alpha)
    }
}

fn prior_centre(priors: &PriorSpec, layout: ThetaLayout) -> (PopulationParams, Vec<f64>) {
    let (mu, tau) = priors
        .population
        .iter()
        .map(|p| match *p {
            PopulationPrior::NormalGamma { mu0, .. } | PopulationPrior::Independent { mu0, .. } => {
                (mu0, p.tau_mean())
            }
        })
        .unzip();
    let shared = (0..layout.shared())
        .map(|j| {
            let m = priors.fixed[j].mean;
            match priors.support.get(j).copied().flatten() {
                Some([lo, hi]) if m < lo || m > hi => 0.5 * (lo + hi),
                _ => m,
            }
        })
        .collect();
    (PopulationParams { mu, tau }, shared)
}

/// Metropolis-within-Gibbs with a tractable likelihood: adaptive random walks for each
/// random effect and for the shared block, conjugate or HMC updates for the population.
pub fn run_exact_reference(
    lik: &dyn IndividualLikelihood,
    layout: ThetaLayout,
    priors: &PriorSpec,
    cfg: &ExactConfig,
) -> Result<ExactOutput> {
    priors.validate(layout)?;
    if cfg.burn_in >= cfg.sweeps || cfg.thin == 0 {
        return input("need burn_in < sweeps and thin ≥ 1");
    }
    let m = lik.n_individuals();
    if m == 0 {
        return input("at least one individual is required");
    }
    let start = Instant::now();
    let q = layout.q;
    let (eta, shared) = prior_centre(priors, layout);
    let mut state = ChainState {
        c_all: vec![eta.mu.clone(); m],
        kappa: shared[..layout.p].to_vec(),
        xi: shared[layout.p..].to_vec(),
        eta,
        sweep: 0,
        round: 0,
    };
    let mut walks = vec![AdaptiveWalk::new(q); m];
    let mut shared_walk = AdaptiveWalk::new(layout.shared());
    let mut eta_hmc = if priors.normal_gamma_all().is_none() {
        Some(Hmc::new(HmcConfig {
            adapt_iters: cfg.burn_in,
            ..cfg.hmc
        })?)
    } else {
        None
    };
    let mut acc1 = vec![0.0; m];
    let mut acc2 = 0.0;
    let kept = cfg.sweeps - cfg.burn_in;
    let mut samples = Vec::with_capacity(kept / cfg.thin + 1);

    for sweep in 0..cfg.sweeps {
        let s = sweep as u64;
        let adapting = sweep < cfg.burn_in;
        let sh = state.shared();
        let eta = &state.eta;
        let moves: Vec<(Vec<f64>, f64)> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(cfg.seed, &[tag::EXACT, 1, s, i as u64]);
                let target = |c: &[f64]| {
                    let lp = eta.logpdf(c);
                    let mut th = c.to_vec();
                    th.extend_from_slice(&sh);
                    lp + lik.loglik(i, &th)
                };
                walk_step(&state.c_all[i], target, &walks[i], &mut rng)
            })
            .collect();
        for (i, (c, a)) in moves.into_iter().enumerate() {
            if adapting {
                walks[i].adapt(&c, a);
            } else {
                acc1[i] += a;
            }
            state.c_all[i] = c;
        }

        if layout.shared() > 0 {
            let mut rng = stream(cfg.seed, &[tag::EXACT, 2, s]);
            let c_all = &state.c_all;
            let target = |x: &[f64]| {
                let mut lp = priors.fixed_logpdf(x);
                if !lp.is_finite() {
                    return lp;
                }
                for (i, c) in c_all.iter().enumerate() {
                    let mut th = c.clone();
                    th.extend_from_slice(x);
                    lp += lik.loglik(i, &th);
                }
                lp
            };
            let (x, a) = walk_step(&state.shared(), target, &shared_walk, &mut rng);
            if adapting {
                shared_walk.adapt(&x, a);
            } else {
                acc2 += a;
            }
            state.set_shared(&x);
        }

        let mut rng = stream(cfg.seed, &[tag::EXACT, 3, s]);
        eta_step(
            priors,
            &state.c_all,
            &mut state.eta,
            eta_hmc.as_mut(),
            &mut rng,
        );
        state.sweep = sweep;
        if !adapting && (sweep - cfg.burn_in).is_multiple_of(cfg.thin) {
            samples.push(state.clone());
        }
    }
    Ok(ExactOutput {
        samples,
        step1_acceptance: acc1.iter().map(|a| a / kept as f64).collect(),
        shared_acceptance: (layout.shared() > 0).then(|| acc2 / kept as f64),
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Exact reference posterior for the OU model using Kalman-filter likelihoods.
pub fn run_exact_reference_ou(
    observed: &[IndividualRecord],
    priors: &PriorSpec,
    cfg: &ExactConfig,
) -> Result<ExactOutput> {
    if observed.iter().any(|r| r.obs_dim != 1) {
        return input("OU records must be scalar");
    }
    let lik = KalmanLikelihood::new(observed);
    run_exact_reference(&lik, ThetaLayout { q: 3, p: 0, s: 1 }, priors, cfg)
}
