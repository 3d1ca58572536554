use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::{self, new_checkpoint};
use super::gibbs::{
    gibbs_round_three_step, gibbs_round_two_step, round0, round1, GibbsContext, GibbsKernels,
};
use super::likelihood::SurrogateLikelihood;
use super::{ChainState, RunConfig, Variant};
use crate::error::{input, Result};
use crate::mixtures::{fit_em, BicRow, ExpertMixture, InverseMixture, TrainingSet};
use crate::models::{IndividualRecord, PriorSpec, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorPredictiveReport {
    pub n_pairs: usize,
    pub k_chosen: usize,
    pub k_fitted: usize,
    pub bic: Vec<BicRow>,
    pub sim_failures: u64,
    pub wall_secs: f64,
}

/// Summary of round `round ≥ 1`, which samples with the mixture of round `round − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub k_used: usize,
    /// Components after pruning of the mixture fitted at the end of this round.
    pub k_fitted: Option<usize>,
    pub pool_size: usize,
    pub sampling_secs: f64,
    pub fit_secs: f64,
    /// Per-individual random-effect acceptance rates (round ≥ 2).
    pub step1_acceptance: Vec<f64>,
    pub step1_invalid: u64,
    pub shared_acceptance: Option<f64>,
    pub shared_step_size: Option<f64>,
    pub eta_acceptance: Option<f64>,
    /// Per-individual support rejections (round 1).
    pub rejections: Vec<usize>,
    pub sim_failures: u64,
}

impl RoundReport {
    pub fn mean_step1_acceptance(&self) -> Option<f64> {
        (!self.step1_acceptance.is_empty())
            .then(|| self.step1_acceptance.iter().sum::<f64>() / self.step1_acceptance.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Final-round states after the configured discard.
    pub samples: Vec<ChainState>,
    /// Mixtures fitted at the end of rounds `0, 1, …`.
    pub mixtures: Vec<ExpertMixture>,
    pub prior_predictive: PriorPredictiveReport,
    /// One entry per round `1..=R`.
    pub rounds: Vec<RoundReport>,
    pub k: usize,
    /// Round after which a checkpoint was picked up, if any.
    pub resumed_after: Option<usize>,
}

fn timed_fit(
    pool: &TrainingSet,
    cfg: &RunConfig,
    k: usize,
    round: usize,
) -> Result<(ExpertMixture, f64)> {
    let t = Instant::now();
    let m = fit_em(pool, &cfg.em_config(k, round))?.mixture;
    Ok((m, t.elapsed().as_secs_f64()))
}

/// Rounds `0..=R` of SeMPLE. With `checkpoint_dir`, every fitted mixture is written
/// as `mixture_r{r}.json` and a compatible checkpoint found there is resumed.
pub fn run_semple(
    observed: &[IndividualRecord],
    priors: &PriorSpec,
    sim: &dyn Simulator,
    cfg: &RunConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<RunOutput> {
    let layout = sim.layout();
    let m = observed.len();
    cfg.validate(m, layout)?;
    priors.validate(layout)?;
    for r in observed {
        if r.obs_dim != sim.obs_dim() || r.times != sim.times() {
            return input(format!(
                "individual {} is not observed on the simulator's time grid",
                r.id
            ));
        }
    }

    let restored = match checkpoint_dir {
        Some(dir) => {
            checkpoint::load(dir)?.filter(|(ck, ..)| ck.matches(cfg, layout, sim.name(), m))
        }
        None => None,
    };
    let resumed_after = restored.as_ref().map(|(ck, ..)| ck.completed_round);

    let (mut ck, mut pool, mut mixtures) = match restored {
        Some(found) => found,
        None => {
            let t = Instant::now();
            let r0 = round0(priors, sim, cfg)?;
            let report = PriorPredictiveReport {
                n_pairs: r0.data.len(),
                k_chosen: r0.k,
                k_fitted: r0.mixture.n_components(),
                bic: r0.bic.clone(),
                sim_failures: r0.sim_failures,
                wall_secs: t.elapsed().as_secs_f64(),
            };
            let ck = new_checkpoint(cfg, layout, sim.name(), m, 0, r0.k, &r0.bic, &report);
            let pool = TrainingSet::new(layout.len(), sim.data_dim(), 0);
            if let Some(dir) = checkpoint_dir {
                checkpoint::save(dir, &ck, &pool, &r0.mixture)?;
            }
            (ck, pool, vec![r0.mixture])
        }
    };
    let k = ck.k;
    let mut samples = Vec::new();

    for r in ck.completed_round + 1..=cfg.rounds {
        if r == 1 {
            let t = Instant::now();
            let phi0 = InverseMixture::from_forward(&mixtures[0])?;
            let r1 = round1(&phi0, observed, priors, sim, cfg, k)?;
            let secs = t.elapsed().as_secs_f64();
            pool = r1.data;
            ck.reports.push(RoundReport {
                round: 1,
                k_used: mixtures[0].n_components(),
                k_fitted: Some(r1.mixture.n_components()),
                pool_size: pool.len(),
                sampling_secs: secs,
                fit_secs: 0.0,
                step1_acceptance: Vec::new(),
                step1_invalid: 0,
                shared_acceptance: None,
                shared_step_size: None,
                eta_acceptance: None,
                rejections: r1.rejections,
                sim_failures: r1.sim_failures,
            });
            ck.state = Some(r1.init);
            ck.kernels = Some(GibbsKernels::new(layout, priors, cfg.hmc)?);
            mixtures.push(r1.mixture);
        } else {
            let phi = &mixtures[r - 1];
            let k_used = phi.n_components();
            let lik = SurrogateLikelihood::new(phi, observed)?;
            let inv = InverseMixture::from_forward(phi)?.marginalize(&layout.c_indices())?;
            let proposals = observed
                .iter()
                .map(|o| inv.condition(o.flat()))
                .collect::<Result<Vec<_>>>()?;
            let last = r == cfg.rounds;
            let refit = !last || cfg.refit_final;
            let ctx = GibbsContext {
                layout,
                priors,
                likelihood: &lik,
                proposals: &proposals,
                simulator: refit.then_some(sim),
                seed: cfg.seed,
                round: r,
            };
            let state = ck.state.as_mut().expect("state initialized in round 1");
            let kernels = ck.kernels.as_mut().expect("kernels initialized in round 1");
            let out = match cfg.variant {
                Variant::ThreeStep => gibbs_round_three_step(&ctx, state, kernels, cfg.n_gibbs)?,
                Variant::TwoStep => gibbs_round_two_step(&ctx, state, kernels, cfg.n_gibbs)?,
            };
            if let Some(d) = &out.data {
                pool.extend(d)?;
            }
            let (k_fitted, fit_secs) = if refit {
                let (mix, secs) = timed_fit(&pool, cfg, k, r)?;
                let kf = mix.n_components();
                mixtures.push(mix);
                (Some(kf), secs)
            } else {
                (None, 0.0)
            };
            ck.reports.push(RoundReport {
                round: r,
                k_used,
                k_fitted,
                pool_size: pool.len(),
                sampling_secs: out.sweep_secs,
                fit_secs,
                step1_acceptance: out.step1.iter().map(|c| c.rate()).collect(),
                step1_invalid: out.step1.iter().map(|c| c.invalid).sum(),
                shared_acceptance: out.shared_accept,
                shared_step_size: out.shared_step_size,
                eta_acceptance: out.eta_accept,
                rejections: Vec::new(),
                sim_failures: out.sim_failures,
            });
            if last {
                samples = out.states[cfg.discard..].to_vec();
            }
            if !refit {
                continue;
            }
        }
        ck.completed_round = r;
        if let Some(dir) = checkpoint_dir {
            checkpoint::save(dir, &ck, &pool, mixtures.last().unwrap())?;
        }
    }

    if samples.is_empty() {
        return input(
            "the final round produced no samples; the checkpoint already covers every round",
        );
    }
    Ok(RunOutput {
        samples,
        mixtures,
        prior_predictive: ck.prior_predictive.clone(),
        rounds: ck.reports,
        k,
        resumed_after,
    })
}
