use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::likelihood::IndividualLikelihood;
use super::{ChainState, RunConfig};
use crate::error::{input, Error, Result};
use crate::linalg::LN_2PI;
use crate::mixtures::{
    fit_em, select_k_bic_with, BicRow, ConditionedPosterior, ExpertMixture, InverseMixture,
    TrainingSet,
};
use crate::models::{
    IndividualRecord, PopulationParams, PopulationPrior, PriorSpec, Simulator, ThetaLayout,
};
use crate::rng::{stream, tag, SimRng};
use crate::samplers::{independence_mh_step, Hmc, HmcConfig, MhCounters};

const SIM_ATTEMPTS: u64 = 10;
const MAX_SIM_FAILURE_RATE: f64 = 0.1;

/// Simulate at `theta`, retrying on non-finite output with fresh streams.
/// Returns the data (if any attempt succeeded) and the number of failed attempts.
pub(crate) fn simulate_checked(
    sim: &dyn Simulator,
    theta: &[f64],
    seed: u64,
    path: &[u64],
) -> (Option<Vec<f64>>, u64) {
    let mut p = path.to_vec();
    p.push(0);
    for a in 0..SIM_ATTEMPTS {
        *p.last_mut().unwrap() = a;
        let y = sim.simulate(theta, &mut stream(seed, &p));
        if y.iter().all(|v| v.is_finite()) {
            return (Some(y), a);
        }
    }
    (None, SIM_ATTEMPTS)
}

fn check_failure_rate(failures: u64, successes: u64) -> Result<()> {
    let rate = failures as f64 / (failures + successes).max(1) as f64;
    if rate > MAX_SIM_FAILURE_RATE {
        Err(Error::Simulator { rate })
    } else {
        Ok(())
    }
}

fn check_observed(observed: &[IndividualRecord], sim: &dyn Simulator) -> Result<()> {
    for r in observed {
        if r.obs_dim != sim.obs_dim() || r.times != sim.times() {
            return input(format!(
                "individual {} is not observed on the simulator's time grid",
                r.id
            ));
        }
    }
    Ok(())
}

fn fit(data: &TrainingSet, cfg: &RunConfig, k: usize, round: usize) -> Result<ExpertMixture> {
    Ok(fit_em(data, &cfg.em_config(k, round))?.mixture)
}

pub struct Round0Output {
    pub data: TrainingSet,
    pub mixture: ExpertMixture,
    pub inverse: InverseMixture,
    /// Component count used by all later fits.
    pub k: usize,
    pub bic: Vec<BicRow>,
    pub sim_failures: u64,
}

/// Prior-predictive pairs and the amortized surrogate fitted to them.
pub fn round0(priors: &PriorSpec, sim: &dyn Simulator, cfg: &RunConfig) -> Result<Round0Output> {
    let layout = sim.layout();
    priors.validate(layout)?;
    let draws: Vec<(Option<(Vec<f64>, Vec<f64>)>, u64)> = (0..cfg.n_prior as u64)
        .into_par_iter()
        .map(|j| {
            let mut failures = 0;
            for a in 0..SIM_ATTEMPTS {
                let (_, theta) = priors.sample_theta(&mut stream(cfg.seed, &[tag::PRIOR, j, a]));
                let y = sim.simulate(&theta, &mut stream(cfg.seed, &[tag::SIMULATE, 0, j, a]));
                if y.iter().all(|v| v.is_finite()) {
                    return (Some((theta, y)), failures);
                }
                failures += 1;
            }
            (None, failures)
        })
        .collect();
    let failures: u64 = draws.iter().map(|d| d.1).sum();
    check_failure_rate(failures, cfg.n_prior as u64)?;
    let mut data = TrainingSet::with_capacity(layout.len(), sim.data_dim(), 0, cfg.n_prior);
    for (pair, _) in &draws {
        let (theta, y) = pair.as_ref().ok_or(Error::Simulator { rate: 1.0 })?;
        data.push(theta, y)?;
    }
    let (k, mixture, bic) = if cfg.k_grid.is_empty() {
        (cfg.k_init, fit(&data, cfg, cfg.k_init, 0)?, Vec::new())
    } else {
        let (k, rows, best) = select_k_bic_with(&data, &cfg.k_grid, &cfg.em_config(cfg.k_init, 0))?;
        (k, best.ok_or(Error::AllFitsFailed)?, rows)
    };
    let inverse = InverseMixture::from_forward(&mixture)?;
    Ok(Round0Output {
        data,
        mixture,
        inverse,
        k,
        bic,
        sim_failures: failures,
    })
}

pub struct Round1Output {
    pub data: TrainingSet,
    pub mixture: ExpertMixture,
    pub inverse: InverseMixture,
    /// Gibbs starting point built from each individual's last draw.
    pub init: ChainState,
    /// Draws rejected for leaving the prior support, per individual.
    pub rejections: Vec<usize>,
    pub sim_failures: u64,
}

/// Surrogate-posterior draws for each individual, their simulations and the refit.
pub fn round1(
    phi0: &InverseMixture,
    observed: &[IndividualRecord],
    priors: &PriorSpec,
    sim: &dyn Simulator,
    cfg: &RunConfig,
    k: usize,
) -> Result<Round1Output> {
    let layout = sim.layout();
    check_observed(observed, sim)?;
    let m = observed.len();
    let per = cfg.n_prior / m;
    let max_attempts = 100 * per;
    type Draws = (Vec<Vec<f64>>, Vec<Vec<f64>>, usize, u64);
    let per_ind: Vec<Result<Draws>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let post = phi0.condition(observed[i].flat())?;
            let mut rng = stream(cfg.seed, &[tag::ROUND1, i as u64]);
            let mut thetas = Vec::with_capacity(per);
            let mut attempts = 0;
            while thetas.len() < per {
                if attempts >= max_attempts {
                    return Err(Error::Rejection {
                        individual: i,
                        accepted: thetas.len(),
                        attempts,
                    });
                }
                attempts += 1;
                let th = post.sample(&mut rng);
                let th = th.as_slice();
                if th.iter().all(|v| v.is_finite()) && priors.in_support(&th[layout.q..]) {
                    thetas.push(th.to_vec());
                }
            }
            let mut ys = Vec::with_capacity(per);
            let mut failures = 0;
            for (j, th) in thetas.iter().enumerate() {
                let (y, f) =
                    simulate_checked(sim, th, cfg.seed, &[tag::SIMULATE, 1, i as u64, j as u64]);
                failures += f;
                ys.push(y.ok_or(Error::Simulator { rate: 1.0 })?);
            }
            Ok((thetas, ys, attempts - per, failures))
        })
        .collect();
    let per_ind: Vec<Draws> = per_ind.into_iter().collect::<Result<_>>()?;
    let failures: u64 = per_ind.iter().map(|d| d.3).sum();
    check_failure_rate(failures, cfg.n_prior as u64)?;

    let mut data = TrainingSet::with_capacity(layout.len(), sim.data_dim(), 1, cfg.n_prior);
    for (thetas, ys, _, _) in &per_ind {
        for (th, y) in thetas.iter().zip(ys) {
            data.push(th, y)?;
        }
    }
    let mixture = fit(&data, cfg, k, 1)?;
    let inverse = InverseMixture::from_forward(&mixture)?;

    let q = layout.q;
    let mut shared = vec![0.0; layout.shared()];
    for (thetas, ..) in &per_ind {
        for (s, v) in shared.iter_mut().zip(&thetas.last().unwrap()[q..]) {
            *s += v / m as f64;
        }
    }
    let eta = priors.sample_eta(&mut stream(cfg.seed, &[tag::INIT]));
    let init = ChainState {
        c_all: per_ind
            .iter()
            .map(|(t, ..)| t.last().unwrap()[..q].to_vec())
            .collect(),
        kappa: shared[..layout.p].to_vec(),
        xi: shared[layout.p..].to_vec(),
        eta,
        sweep: 0,
        round: 1,
    };
    Ok(Round1Output {
        data,
        mixture,
        inverse,
        init,
        rejections: per_ind.iter().map(|d| d.2).collect(),
        sim_failures: failures,
    })
}

/// Persistent HMC kernels of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsKernels {
    pub shared: Option<Hmc>,
    /// Over `(μ_j, log τ_j)` of the coordinates without a Normal–Gamma prior.
    pub eta: Option<Hmc>,
}

impl GibbsKernels {
    pub fn new(layout: ThetaLayout, priors: &PriorSpec, cfg: HmcConfig) -> Result<Self> {
        let shared = if layout.shared() > 0 {
            Some(Hmc::new(cfg)?)
        } else {
            None
        };
        let needs_eta = priors.population.iter().any(|p| p.normal_gamma().is_none());
        let eta = if needs_eta {
            Some(Hmc::new(cfg)?)
        } else {
            None
        };
        Ok(Self { shared, eta })
    }
}

/// Inputs shared by every sweep of one Gibbs round.
pub struct GibbsContext<'a> {
    pub layout: ThetaLayout,
    pub priors: &'a PriorSpec,
    pub likelihood: &'a dyn IndividualLikelihood,
    /// Independence proposals over `c`, one per individual.
    pub proposals: &'a [ConditionedPosterior],
    /// When set, every sweep simulates one dataset per individual for the next fit.
    pub simulator: Option<&'a dyn Simulator>,
    pub seed: u64,
    pub round: usize,
}

#[derive(Debug, Clone)]
pub struct GibbsOutput {
    pub states: Vec<ChainState>,
    pub data: Option<TrainingSet>,
    pub step1: Vec<MhCounters>,
    pub shared_accept: Option<f64>,
    pub shared_step_size: Option<f64>,
    pub eta_accept: Option<f64>,
    /// Wall time of the sweeps, simulation included.
    pub sweep_secs: f64,
    pub sim_failures: u64,
}

/// Three-block sweeps: random effects by independence MH, shared parameters by HMC,
/// population parameters by conjugacy or HMC.
pub fn gibbs_round_three_step(
    ctx: &GibbsContext,
    state: &mut ChainState,
    kernels: &mut GibbsKernels,
    n_sweeps: usize,
) -> Result<GibbsOutput> {
    gibbs_round(ctx, state, kernels, n_sweeps)
}

/// Two-block sweeps for models whose parameters are all random effects.
pub fn gibbs_round_two_step(
    ctx: &GibbsContext,
    state: &mut ChainState,
    kernels: &mut GibbsKernels,
    n_sweeps: usize,
) -> Result<GibbsOutput> {
    if ctx.layout.shared() != 0 {
        return input("the two-step sweep needs a layout without shared parameters");
    }
    gibbs_round(ctx, state, kernels, n_sweeps)
}

fn with_shared(c: &[f64], shared: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(c.len() + shared.len());
    v.extend_from_slice(c);
    v.extend_from_slice(shared);
    v
}

fn gibbs_round(
    ctx: &GibbsContext,
    state: &mut ChainState,
    kernels: &mut GibbsKernels,
    n_sweeps: usize,
) -> Result<GibbsOutput> {
    let m = state.c_all.len();
    let q = ctx.layout.q;
    if ctx.proposals.len() != m || ctx.likelihood.n_individuals() != m {
        return input("proposals and likelihoods must cover every individual");
    }
    if ctx.proposals.iter().any(|p| p.dim() != q) {
        return input("proposals must be over the random-effect block");
    }
    let round = ctx.round as u64;
    let start = Instant::now();
    let mut states = Vec::with_capacity(n_sweeps);
    let mut data = ctx.simulator.map(|s| {
        TrainingSet::with_capacity(ctx.layout.len(), s.data_dim(), ctx.round, n_sweeps * m)
    });
    let mut step1 = vec![MhCounters::default(); m];
    let (mut sh_acc, mut sh_n, mut eta_acc, mut eta_n) = (0.0, 0usize, 0.0, 0usize);
    let mut sim_failures = 0u64;
    let mut sim_ok = 0u64;

    for sweep in 0..n_sweeps {
        let s = sweep as u64;
        // step 1: random effects, independently per individual
        let shared = state.shared();
        let eta = &state.eta;
        let moves: Vec<_> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(ctx.seed, &[tag::STEP1, round, s, i as u64]);
                let target = |c: &[f64]| {
                    let lp = eta.logpdf(c);
                    if !lp.is_finite() {
                        return lp;
                    }
                    lp + ctx.likelihood.loglik(i, &with_shared(c, &shared))
                };
                independence_mh_step(&state.c_all[i], target, &ctx.proposals[i], &mut rng)
            })
            .collect();
        for (i, mv) in moves.into_iter().enumerate() {
            step1[i].record(&mv);
            state.c_all[i] = mv.next;
        }

        // step 2: shared parameters against the product likelihood
        if let Some(hmc) = kernels.shared.as_mut() {
            let c_all = &state.c_all;
            let priors = ctx.priors;
            let f = |x: &[f64]| {
                if !priors.in_support(x) {
                    return (f64::NEG_INFINITY, DVector::zeros(x.len()));
                }
                let mut lp = priors.fixed_logpdf(x);
                let mut g = DVector::from_vec(priors.fixed_logpdf_grad(x));
                for (i, c) in c_all.iter().enumerate() {
                    let (v, gi) = ctx.likelihood.loglik_grad(i, &with_shared(c, x));
                    lp += v;
                    for (gk, gik) in g.iter_mut().zip(&gi[q..]) {
                        *gk += gik;
                    }
                }
                (lp, g)
            };
            let mut rng = stream(ctx.seed, &[tag::STEP2, round, s]);
            let out = hmc.step(&state.shared(), f, &mut rng);
            sh_acc += out.accept_prob;
            sh_n += 1;
            state.set_shared(&out.next);
        }

        // step 3: population parameters
        let mut rng = stream(ctx.seed, &[tag::STEP3, round, s]);
        if let Some(p) = eta_step(
            ctx.priors,
            &state.c_all,
            &mut state.eta,
            kernels.eta.as_mut(),
            &mut rng,
        ) {
            eta_acc += p;
            eta_n += 1;
        }

        state.sweep = sweep;
        state.round = ctx.round;
        if let (Some(sim), Some(d)) = (ctx.simulator, data.as_mut()) {
            let st = &*state;
            let ys: Vec<_> = (0..m)
                .into_par_iter()
                .map(|i| {
                    let th = st.theta(i);
                    let (y, f) =
                        simulate_checked(sim, &th, ctx.seed, &[tag::SIMULATE, round, s, i as u64]);
                    (th, y, f)
                })
                .collect();
            for (th, y, f) in ys {
                sim_failures += f;
                if let Some(y) = y {
                    sim_ok += 1;
                    d.push(&th, &y)?;
                }
            }
        }
        states.push(state.clone());
    }
    if ctx.simulator.is_some() {
        check_failure_rate(sim_failures, sim_ok)?;
    }
    if n_sweeps > 0 && step1.iter().all(|c| c.accepted == 0) {
        log::warn!("round {}: no random-effect proposal was accepted; the surrogate may not match the data", ctx.round);
    }
    Ok(GibbsOutput {
        states,
        data,
        step1,
        shared_accept: (sh_n > 0).then(|| sh_acc / sh_n as f64),
        shared_step_size: kernels.shared.as_ref().map(|h| h.step_size()),
        eta_accept: (eta_n > 0).then(|| eta_acc / eta_n as f64),
        sweep_secs: start.elapsed().as_secs_f64(),
        sim_failures,
    })
}

/// Update `eta` given the random effects. Normal–Gamma coordinates take an exact
/// conjugate draw; the others take one joint HMC transition on `(μ, log τ)`.
/// Returns the HMC acceptance probability when HMC ran.
pub fn eta_step(
    priors: &PriorSpec,
    c_all: &[Vec<f64>],
    eta: &mut PopulationParams,
    hmc: Option<&mut Hmc>,
    rng: &mut SimRng,
) -> Option<f64> {
    let q = eta.dim();
    let column = |j: usize| -> Vec<f64> { c_all.iter().map(|c| c[j]).collect() };
    let mut free = Vec::new();
    for j in 0..q {
        match priors.population[j].normal_gamma() {
            Some(ng) => {
                let (mu, tau) = ng.posterior(&column(j)).sample(rng);
                eta.mu[j] = mu;
                eta.tau[j] = tau;
            }
            None => free.push(j),
        }
    }
    let hmc = hmc?;
    if free.is_empty() {
        return None;
    }
    let m = c_all.len() as f64;
    let cols: Vec<Vec<f64>> = free.iter().map(|&j| column(j)).collect();
    let priors_free: Vec<PopulationPrior> = free.iter().map(|&j| priors.population[j]).collect();
    let nf = free.len();
    let f = |z: &[f64]| {
        let mut lp = 0.0;
        let mut g = DVector::zeros(2 * nf);
        for (k, pr) in priors_free.iter().enumerate() {
            let (mu, log_tau) = (z[k], z[nf + k]);
            let tau = log_tau.exp();
            if !tau.is_finite() || tau <= 0.0 {
                return (f64::NEG_INFINITY, g);
            }
            let PopulationPrior::Independent {
                mu0,
                sigma,
                alpha,
                beta,
            } = *pr
            else {
                unreachable!()
            };
            let ss: f64 = cols[k].iter().map(|c| (c - mu).powi(2)).sum();
            let sd: f64 = cols[k].iter().map(|c| c - mu).sum();
            lp += pr.logpdf(mu, tau) + log_tau;
            lp += 0.5 * m * log_tau - 0.5 * m * LN_2PI - 0.5 * tau * ss;
            g[k] = -(mu - mu0) / (sigma * sigma) + tau * sd;
            g[nf + k] = alpha - beta * tau + 0.5 * m - 0.5 * tau * ss;
        }
        (lp, g)
    };
    let mut z: Vec<f64> = free.iter().map(|&j| eta.mu[j]).collect();
    z.extend(free.iter().map(|&j| eta.tau[j].ln()));
    let out = hmc.step(&z, f, rng);
    for (k, &j) in free.iter().enumerate() {
        eta.mu[j] = out.next[k];
        eta.tau[j] = out.next[nf + k].exp();
    }
    Some(out.accept_prob)
}
