use nalgebra::{DMatrix, DVector};

use super::{CovStructure, TrainingSet};
use crate::error::{input, Error, Result};
use crate::linalg::{
    cholesky_lower, forward_substitute, log_sum_exp, spd_inverse, Gaussian, LN_2PI,
};

/// Forward GLLiM parameters `φ̃ = {π_k, ν̃_k, Γ̃_k, Ã_k, b̃_k, Σ̃_k}`; the surrogate likelihood.
#[derive(Debug, Clone)]
pub struct ExpertMixture {
    weights: Vec<f64>,
    theta_means: Vec<DVector<f64>>,
    theta_covs: Vec<DMatrix<f64>>,
    maps: Vec<DMatrix<f64>>,
    offsets: Vec<DVector<f64>>,
    noise_covs: Vec<DMatrix<f64>>,
    cov_structure: CovStructure,
    cache: Vec<ComponentCache>,
}

#[derive(Debug, Clone)]
struct ComponentCache {
    log_weight: f64,
    theta: Gaussian,
    theta_prec: DMatrix<f64>,
    noise_chol: DMatrix<f64>,
    noise_log_norm: f64,
}

impl PartialEq for ExpertMixture {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
            && self.theta_means == other.theta_means
            && self.theta_covs == other.theta_covs
            && self.maps == other.maps
            && self.offsets == other.offsets
            && self.noise_covs == other.noise_covs
            && self.cov_structure == other.cov_structure
    }
}

pub(crate) fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return input("mixture needs at least one component");
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return input("mixture weights must be finite and nonnegative");
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return input(format!("mixture weights sum to {s}, expected 1"));
    }
    Ok(())
}

impl ExpertMixture {
    /// Build and validate a mixture. `maps[k]` is `D × l`, `noise_covs[k]` is `D × D`.
    pub fn new(
        weights: Vec<f64>,
        theta_means: Vec<DVector<f64>>,
        theta_covs: Vec<DMatrix<f64>>,
        maps: Vec<DMatrix<f64>>,
        offsets: Vec<DVector<f64>>,
        noise_covs: Vec<DMatrix<f64>>,
        cov_structure: CovStructure,
    ) -> Result<Self> {
        check_weights(&weights)?;
        let k = weights.len();
        if [
            theta_means.len(),
            theta_covs.len(),
            maps.len(),
            offsets.len(),
            noise_covs.len(),
        ]
        .iter()
        .any(|&n| n != k)
        {
            return input("every parameter array must have one entry per component");
        }
        let l = theta_means[0].len();
        let d = offsets[0].len();
        if l == 0 || d == 0 {
            return input("parameter and observation dimensions must be positive");
        }
        let mut cache = Vec::with_capacity(k);
        for c in 0..k {
            if theta_means[c].len() != l
                || theta_covs[c].shape() != (l, l)
                || maps[c].shape() != (d, l)
                || offsets[c].len() != d
                || noise_covs[c].shape() != (d, d)
            {
                return input(format!("component {c} has inconsistent dimensions"));
            }
            if cov_structure == CovStructure::Diagonal {
                let nc = &noise_covs[c];
                let off: f64 = (0..d)
                    .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
                    .map(|ij| nc[ij].abs())
                    .sum();
                if off != 0.0 {
                    return input(format!(
                        "component {c}: diagonal structure with off-diagonal noise entries"
                    ));
                }
            }
            let theta =
                Gaussian::new(theta_means[c].clone(), &theta_covs[c]).ok_or(Error::Inversion {
                    component: c,
                    matrix: "theta covariance",
                })?;
            let noise_chol = cholesky_lower(&noise_covs[c]).ok_or(Error::Inversion {
                component: c,
                matrix: "noise covariance",
            })?;
            let noise_log_norm =
                -0.5 * (d as f64 * LN_2PI + crate::linalg::log_det_from_lower(&noise_chol));
            let theta_prec = spd_inverse(&theta.chol);
            cache.push(ComponentCache {
                log_weight: weights[c].ln(),
                theta,
                theta_prec,
                noise_chol,
                noise_log_norm,
            });
        }
        Ok(Self {
            weights,
            theta_means,
            theta_covs,
            maps,
            offsets,
            noise_covs,
            cov_structure,
            cache,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }
    pub fn theta_dim(&self) -> usize {
        self.theta_means[0].len()
    }
    pub fn obs_dim(&self) -> usize {
        self.offsets[0].len()
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn theta_means(&self) -> &[DVector<f64>] {
        &self.theta_means
    }
    pub fn theta_covs(&self) -> &[DMatrix<f64>] {
        &self.theta_covs
    }
    pub fn maps(&self) -> &[DMatrix<f64>] {
        &self.maps
    }
    pub fn offsets(&self) -> &[DVector<f64>] {
        &self.offsets
    }
    pub fn noise_covs(&self) -> &[DMatrix<f64>] {
        &self.noise_covs
    }
    pub fn cov_structure(&self) -> CovStructure {
        self.cov_structure
    }

    fn check_point(&self, y: &[f64], theta: &[f64]) -> Result<()> {
        if y.len() != self.obs_dim() || theta.len() != self.theta_dim() {
            return input(format!(
                "point has dims (y: {}, θ: {}), mixture expects ({}, {})",
                y.len(),
                theta.len(),
                self.obs_dim(),
                self.theta_dim()
            ));
        }
        if y.iter().chain(theta).any(|v| !v.is_finite()) {
            return input("non-finite evaluation point");
        }
        Ok(())
    }

    /// `log π_k + log N(θ; ν̃_k, Γ̃_k)` for every component.
    fn theta_terms(&self, theta: &[f64]) -> Vec<f64> {
        self.cache
            .iter()
            .map(|c| c.log_weight + c.theta.logpdf(theta))
            .collect()
    }

    fn noise_logpdf(&self, k: usize, y: &[f64], theta: &[f64]) -> f64 {
        let c = &self.cache[k];
        let mean = &self.maps[k] * DVector::from_column_slice(theta) + &self.offsets[k];
        let mut r = DVector::from_fn(y.len(), |i, _| y[i] - mean[i]);
        forward_substitute(&c.noise_chol, &mut r);
        c.noise_log_norm - 0.5 * r.norm_squared()
    }

    /// Mixture weights `ω̃_k(θ)`.
    pub fn gate_weights(&self, theta: &[f64]) -> Vec<f64> {
        let mut t = self.theta_terms(theta);
        crate::linalg::softmax_in_place(&mut t);
        t
    }

    /// `log q̃(y | θ) = log Σ_k ω̃_k(θ) N(y; Ã_k θ + b̃_k, Σ̃_k)`.
    pub fn surrogate_loglik(&self, y: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_point(y, theta)?;
        let gate = self.theta_terms(theta);
        let joint: Vec<f64> = gate
            .iter()
            .enumerate()
            .map(|(k, g)| g + self.noise_logpdf(k, y, theta))
            .collect();
        Ok(log_sum_exp(&joint) - log_sum_exp(&gate))
    }

    /// Gradient of `log q̃(y | θ)` with respect to θ, including the gate dependence.
    pub fn surrogate_loglik_grad(&self, y: &[f64], theta: &[f64]) -> Result<DVector<f64>> {
        self.check_point(y, theta)?;
        Ok(self.observe(y)?.grad(theta).1)
    }

    /// Marginal mixture density of θ, `log Σ_k π_k N(θ; ν̃_k, Γ̃_k)`.
    pub fn theta_marginal_logpdf(&self, theta: &[f64]) -> f64 {
        log_sum_exp(&self.theta_terms(theta))
    }

    /// Joint `log q(y, θ)`.
    pub fn joint_logpdf(&self, y: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_point(y, theta)?;
        let gate = self.theta_terms(theta);
        let joint: Vec<f64> = gate
            .iter()
            .enumerate()
            .map(|(k, g)| g + self.noise_logpdf(k, y, theta))
            .collect();
        Ok(log_sum_exp(&joint))
    }

    /// Precompute everything that depends only on `y`, for repeated evaluation at many θ.
    pub fn observe(&self, y: &[f64]) -> Result<ObservedLikelihood> {
        if y.len() != self.obs_dim() {
            return input(format!(
                "observation has length {}, expected {}",
                y.len(),
                self.obs_dim()
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return input("non-finite observation");
        }
        let l = self.theta_dim();
        let comps = (0..self.n_components())
            .map(|k| {
                let c = &self.cache[k];
                let mut w = DVector::from_fn(y.len(), |i, _| y[i] - self.offsets[k][i]);
                forward_substitute(&c.noise_chol, &mut w);
                let g = c
                    .noise_chol
                    .solve_lower_triangular(&self.maps[k])
                    .expect("positive-diagonal Cholesky factor");
                ObservedComponent {
                    log_weight: c.log_weight,
                    theta: c.theta.clone(),
                    theta_prec: c.theta_prec.clone(),
                    whitened_y: w,
                    whitened_map: g,
                    noise_log_norm: c.noise_log_norm,
                }
            })
            .collect();
        Ok(ObservedLikelihood {
            theta_dim: l,
            comps,
        })
    }

    /// GLLiM log-likelihood `Σ_n log q(y_n, θ_n)` of a training set.
    pub fn gllim_loglik(&self, data: &TrainingSet) -> Result<f64> {
        if data.theta_dim() != self.theta_dim() || data.obs_dim() != self.obs_dim() {
            return input("training set dimensions do not match the mixture");
        }
        Ok(super::em::log_joint_table(self, data).1)
    }

    pub(crate) fn noise_chol(&self, k: usize) -> &DMatrix<f64> {
        &self.cache[k].noise_chol
    }
    pub(crate) fn noise_log_norm(&self, k: usize) -> f64 {
        self.cache[k].noise_log_norm
    }
    pub(crate) fn theta_gaussian(&self, k: usize) -> &Gaussian {
        &self.cache[k].theta
    }
    pub(crate) fn log_weight(&self, k: usize) -> f64 {
        self.cache[k].log_weight
    }

    /// Number of free parameters of this mixture.
    pub fn param_count(&self) -> usize {
        param_count_dims(
            self.n_components(),
            self.obs_dim(),
            self.theta_dim(),
            self.cov_structure,
        )
    }
}

#[derive(Debug, Clone)]
struct ObservedComponent {
    log_weight: f64,
    theta: Gaussian,
    theta_prec: DMatrix<f64>,
    whitened_y: DVector<f64>,
    whitened_map: DMatrix<f64>,
    noise_log_norm: f64,
}

/// Surrogate likelihood with the observation fixed: `θ ↦ log q̃(y_o | θ)`.
#[derive(Debug, Clone)]
pub struct ObservedLikelihood {
    theta_dim: usize,
    comps: Vec<ObservedComponent>,
}

impl ObservedLikelihood {
    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    fn terms(
        &self,
        theta: &[f64],
        with_grad: bool,
    ) -> (
        Vec<f64>,
        Vec<f64>,
        Vec<Option<(DVector<f64>, DVector<f64>)>>,
    ) {
        let th = DVector::from_column_slice(theta);
        let mut gate = Vec::with_capacity(self.comps.len());
        let mut joint = Vec::with_capacity(self.comps.len());
        let mut grads = Vec::with_capacity(self.comps.len());
        let mut buf = DVector::zeros(self.theta_dim);
        for c in &self.comps {
            c.theta.whiten_into(theta, &mut buf);
            let g = c.log_weight + c.theta.log_norm - 0.5 * buf.norm_squared();
            let r = &c.whitened_y - &c.whitened_map * &th;
            let h = c.noise_log_norm - 0.5 * r.norm_squared();
            gate.push(g);
            joint.push(g + h);
            if with_grad {
                let dg = -(&c.theta_prec * (&th - &c.theta.mean));
                let dh = c.whitened_map.tr_mul(&r);
                grads.push(Some((dg, dh)));
            }
        }
        (gate, joint, grads)
    }

    pub fn loglik(&self, theta: &[f64]) -> f64 {
        let (gate, joint, _) = self.terms(theta, false);
        log_sum_exp(&joint) - log_sum_exp(&gate)
    }

    /// `(log q̃(y_o | θ), ∇_θ log q̃(y_o | θ))`.
    pub fn grad(&self, theta: &[f64]) -> (f64, DVector<f64>) {
        let (mut gate, mut joint, grads) = self.terms(theta, true);
        let lse_j = crate::linalg::softmax_in_place(&mut joint);
        let lse_g = crate::linalg::softmax_in_place(&mut gate);
        let mut out = DVector::zeros(self.theta_dim);
        for (k, gr) in grads.into_iter().enumerate() {
            let (dg, dh) = gr.expect("gradient requested");
            // ∇ = Σ_k (s_k − ω̃_k) ∇g_k + Σ_k s_k ∇h_k, s = softmax(joint), ω̃ = softmax(gate)
            out.axpy(joint[k] - gate[k], &dg, 1.0);
            out.axpy(joint[k], &dh, 1.0);
        }
        (lse_j - lse_g, out)
    }
}

/// `D(φ̃) = (K−1) + K(D·l + D + l + nbpar_Σ + nbpar_Γ)`, with `D = d_o·n`, `l = q+p+s`.
pub fn param_count(
    k: usize,
    d_obs: usize,
    n_times: usize,
    q: usize,
    p: usize,
    s: usize,
    cov: CovStructure,
) -> usize {
    param_count_dims(k, d_obs * n_times, q + p + s, cov)
}

pub(crate) fn param_count_dims(k: usize, d: usize, l: usize, cov: CovStructure) -> usize {
    let nbpar_sigma = match cov {
        CovStructure::Full => d * (d + 1) / 2,
        CovStructure::Diagonal => d,
    };
    let nbpar_gamma = l * (l + 1) / 2;
    (k - 1) + k * (d * l + d + l + nbpar_sigma + nbpar_gamma)
}
