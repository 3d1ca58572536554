use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::ChainState;
use crate::error::{input, Error, Result};
use crate::models::{IndividualRecord, Simulator};
use crate::rng::{stream, tag};

/// Percentile `p ∈ [0, 1]` of sorted values by linear interpolation between order statistics.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise 2.5% and 97.5% posterior-predictive curves of one individual.
/// Entries are time-major with `obs_dim` values per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveBand {
    pub id: String,
    pub times: Vec<f64>,
    pub obs_dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Fraction of observed values inside `[lower, upper]`.
    pub coverage_fraction: f64,
}

impl PredictiveBand {
    fn from_sims(record: &IndividualRecord, sims: &[Vec<f64>]) -> Self {
        let len = record.obs.len();
        let mut lower = Vec::with_capacity(len);
        let mut upper = Vec::with_capacity(len);
        let mut col = vec![0.0; sims.len()];
        for k in 0..len {
            for (c, s) in col.iter_mut().zip(sims) {
                *c = s[k];
            }
            col.sort_by(f64::total_cmp);
            lower.push(percentile_sorted(&col, 0.025));
            upper.push(percentile_sorted(&col, 0.975));
        }
        let inside = record
            .obs
            .iter()
            .zip(lower.iter().zip(&upper))
            .filter(|(y, (l, u))| **l <= **y && **y <= **u)
            .count();
        Self {
            id: record.id.clone(),
            times: record.times.clone(),
            obs_dim: record.obs_dim,
            lower,
            upper,
            coverage_fraction: inside as f64 / len as f64,
        }
    }
}

/// For each individual, simulate `n_sims` datasets at `(c⁽ⁱ⁾, κ, ξ)` taken from uniformly
/// drawn stored states and summarize them as a percentile band.
pub fn posterior_predictive(
    samples: &[ChainState],
    sim: &dyn Simulator,
    observed: &[IndividualRecord],
    n_sims: usize,
    seed: u64,
) -> Result<Vec<PredictiveBand>> {
    if samples.is_empty() || n_sims == 0 {
        return input("posterior predictive needs samples and at least one simulation");
    }
    if samples.iter().any(|s| s.c_all.len() != observed.len()) {
        return input("samples and observed data disagree on the number of individuals");
    }
    observed
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            if rec.times != sim.times() || rec.obs_dim != sim.obs_dim() {
                return input(format!(
                    "individual {} is not on the simulator's time grid",
                    rec.id
                ));
            }
            let sims = (0..n_sims)
                .map(|s| {
                    let mut rng = stream(seed, &[tag::PREDICTIVE, i as u64, s as u64]);
                    let row = &samples[rng.random_range(0..samples.len())];
                    let y = sim.simulate(&row.theta(i), &mut rng);
                    if y.iter().all(|v| v.is_finite()) {
                        Ok(y)
                    } else {
                        Err(Error::Simulator {
                            rate: 1.0 / n_sims as f64,
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PredictiveBand::from_sims(rec, &sims))
        })
        .collect()
}

/// Mean of the per-individual coverage fractions.
pub fn mean_coverage(bands: &[PredictiveBand]) -> f64 {
    bands.iter().map(|b| b.coverage_fraction).sum::<f64>() / bands.len().max(1) as f64
}
