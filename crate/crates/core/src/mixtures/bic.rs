use serde::{Deserialize, Serialize};

use super::{fit_em, CovStructure, EmConfig, ExpertMixture, TrainingSet};
use crate::error::{input, Error, Result};

/// One row of a BIC scan. `error` is set when the fit at this K failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicRow {
    pub k_requested: usize,
    pub k_fitted: Option<usize>,
    pub loglik: Option<f64>,
    pub n_params: Option<usize>,
    pub bic: Option<f64>,
    pub error: Option<String>,
}

/// `BIC = −2 L(φ̂) + D(φ̃) log N`, evaluated on the training pairs.
pub fn bic(mix: &ExpertMixture, loglik: f64, n: usize) -> f64 {
    -2.0 * loglik + mix.param_count() as f64 * (n as f64).ln()
}

/// Fit one mixture per K in `grid` and return the K with smallest BIC plus the full table.
pub fn select_k_bic(
    data: &TrainingSet,
    grid: &[usize],
    cov: CovStructure,
    seed: u64,
) -> Result<(usize, Vec<BicRow>, Option<ExpertMixture>)> {
    select_k_bic_with(
        data,
        grid,
        &EmConfig {
            cov_structure: cov,
            seed,
            ..EmConfig::default()
        },
    )
}

pub fn select_k_bic_with(
    data: &TrainingSet,
    grid: &[usize],
    base: &EmConfig,
) -> Result<(usize, Vec<BicRow>, Option<ExpertMixture>)> {
    if grid.is_empty() {
        return input("K grid must be nonempty");
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, usize, ExpertMixture)> = None;
    for &k in grid {
        let cfg = EmConfig {
            k_init: k,
            ..base.clone()
        };
        match fit_em(data, &cfg) {
            Ok(fit) => {
                let l = *fit.loglik_trace.last().expect("nonempty trace");
                let b = bic(&fit.mixture, l, data.len());
                rows.push(BicRow {
                    k_requested: k,
                    k_fitted: Some(fit.mixture.n_components()),
                    loglik: Some(l),
                    n_params: Some(fit.mixture.param_count()),
                    bic: Some(b),
                    error: None,
                });
                if b.is_finite() && best.as_ref().is_none_or(|(bb, _, _)| b < *bb) {
                    best = Some((b, k, fit.mixture));
                }
            }
            Err(e) => rows.push(BicRow {
                k_requested: k,
                k_fitted: None,
                loglik: None,
                n_params: None,
                bic: None,
                error: Some(e.to_string()),
            }),
        }
    }
    match best {
        Some((_, k, mix)) => Ok((k, rows, Some(mix))),
        None => Err(Error::AllFitsFailed),
    }
}
