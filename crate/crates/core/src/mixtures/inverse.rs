use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::expert::check_weights;
use super::{CovStructure, ExpertMixture};
use crate::error::{input, Error, Result};
use crate::linalg::{cholesky_lower, log_sum_exp, symmetrize, Gaussian};
use crate::rng::seeded;

/// Inverse GLLiM parameters `φ = {π_k, ν_k, Γ_k, A_k, b_k, Σ_k}`; the surrogate posterior.
#[derive(Debug, Clone)]
pub struct InverseMixture {
    weights: Vec<f64>,
    y_means: Vec<DVector<f64>>,
    y_covs: Vec<DMatrix<f64>>,
    maps: Vec<DMatrix<f64>>,
    offsets: Vec<DVector<f64>>,
    post_covs: Vec<DMatrix<f64>>,
    y_gauss: Vec<Gaussian>,
    post_chol: Vec<DMatrix<f64>>,
}

impl PartialEq for InverseMixture {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
            && self.y_means == other.y_means
            && self.y_covs == other.y_covs
            && self.maps == other.maps
            && self.offsets == other.offsets
            && self.post_covs == other.post_covs
    }
}

impl InverseMixture {
    /// Build and validate. `maps[k]` is `l × D`, `post_covs[k]` is `l × l`.
    pub fn new(
        weights: Vec<f64>,
        y_means: Vec<DVector<f64>>,
        y_covs: Vec<DMatrix<f64>>,
        maps: Vec<DMatrix<f64>>,
        offsets: Vec<DVector<f64>>,
        post_covs: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        check_weights(&weights)?;
        let k = weights.len();
        if [
            y_means.len(),
            y_covs.len(),
            maps.len(),
            offsets.len(),
            post_covs.len(),
        ]
        .iter()
        .any(|&n| n != k)
        {
            return input("every parameter array must have one entry per component");
        }
        let d = y_means[0].len();
        let l = offsets[0].len();
        if d == 0 || l == 0 {
            return input("parameter and observation dimensions must be positive");
        }
        let mut y_gauss = Vec::with_capacity(k);
        let mut post_chol = Vec::with_capacity(k);
        for c in 0..k {
            if y_means[c].len() != d
                || y_covs[c].shape() != (d, d)
                || maps[c].shape() != (l, d)
                || offsets[c].len() != l
                || post_covs[c].shape() != (l, l)
            {
                return input(format!("component {c} has inconsistent dimensions"));
            }
            y_gauss.push(Gaussian::new(y_means[c].clone(), &y_covs[c]).ok_or(
                Error::Inversion {
                    component: c,
                    matrix: "observation covariance",
                },
            )?);
            post_chol.push(cholesky_lower(&post_covs[c]).ok_or(Error::Inversion {
                component: c,
                matrix: "posterior covariance",
            })?);
        }
        Ok(Self {
            weights,
            y_means,
            y_covs,
            maps,
            offsets,
            post_covs,
            y_gauss,
            post_chol,
        })
    }

    /// Closed-form inverse parameters of a forward mixture.
    pub fn from_forward(phi_tilde: &ExpertMixture) -> Result<Self> {
        let k = phi_tilde.n_components();
        let l = phi_tilde.theta_dim();
        let mut y_means = Vec::with_capacity(k);
        let mut y_covs = Vec::with_capacity(k);
        let mut maps = Vec::with_capacity(k);
        let mut offsets = Vec::with_capacity(k);
        let mut post_covs = Vec::with_capacity(k);
        for c in 0..k {
            let a = &phi_tilde.maps()[c];
            let b = &phi_tilde.offsets()[c];
            let nu = &phi_tilde.theta_means()[c];
            let gamma = &phi_tilde.theta_covs()[c];
            let sigma = &phi_tilde.noise_covs()[c];
            let ls = phi_tilde.noise_chol(c);
            let lg = &phi_tilde.theta_gaussian(c).chol;

            let mut gamma_y = sigma + a * gamma * a.transpose();
            symmetrize(&mut gamma_y);
            y_means.push(a * nu + b);
            y_covs.push(gamma_y);

            // G = L_Σ⁻¹ Ã, so ÃᵀΣ̃⁻¹Ã = GᵀG and ÃᵀΣ̃⁻¹ = Gᵀ L_Σ⁻¹
            let g = ls.solve_lower_triangular(a).ok_or(Error::Inversion {
                component: c,
                matrix: "noise covariance",
            })?;
            let gamma_inv = crate::linalg::spd_inverse(lg);
            let mut prec = &gamma_inv + g.tr_mul(&g);
            symmetrize(&mut prec);
            let lp = cholesky_lower(&prec).ok_or(Error::Inversion {
                component: c,
                matrix: "posterior precision",
            })?;
            let post = crate::linalg::spd_inverse(&lp);
            let linv = ls
                .solve_lower_triangular(&DMatrix::identity(ls.nrows(), ls.nrows()))
                .ok_or(Error::Inversion {
                    component: c,
                    matrix: "noise covariance",
                })?;
            let at_sinv = g.transpose() * &linv;
            let a_post = &post * &at_sinv;
            let b_post = &post * (&gamma_inv * nu - &at_sinv * b);
            debug_assert_eq!(a_post.shape(), (l, a.nrows()));
            maps.push(a_post);
            offsets.push(b_post);
            post_covs.push(post);
        }
        Self::new(
            phi_tilde.weights().to_vec(),
            y_means,
            y_covs,
            maps,
            offsets,
            post_covs,
        )
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }
    pub fn theta_dim(&self) -> usize {
        self.offsets[0].len()
    }
    pub fn obs_dim(&self) -> usize {
        self.y_means[0].len()
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn y_means(&self) -> &[DVector<f64>] {
        &self.y_means
    }
    pub fn y_covs(&self) -> &[DMatrix<f64>] {
        &self.y_covs
    }
    pub fn maps(&self) -> &[DMatrix<f64>] {
        &self.maps
    }
    pub fn offsets(&self) -> &[DVector<f64>] {
        &self.offsets
    }
    pub fn post_covs(&self) -> &[DMatrix<f64>] {
        &self.post_covs
    }

    /// `log Σ_k π_k N(y; ν_k, Γ_k)`.
    pub fn y_marginal_logpdf(&self, y: &[f64]) -> f64 {
        let t: Vec<f64> = (0..self.n_components())
            .map(|k| self.weights[k].ln() + self.y_gauss[k].logpdf(y))
            .collect();
        log_sum_exp(&t)
    }

    /// Posterior weights `ω_k(y)`.
    pub fn gate_weights(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.condition(y)?.weights)
    }

    /// Fix the observation, producing the Gaussian mixture `q(θ | y)`.
    pub fn condition(&self, y: &[f64]) -> Result<ConditionedPosterior> {
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
        let mut logw: Vec<f64> = (0..self.n_components())
            .map(|k| self.weights[k].ln() + self.y_gauss[k].logpdf(y))
            .collect();
        let lse = log_sum_exp(&logw);
        if !lse.is_finite() {
            return Err(Error::DegenerateConditioning);
        }
        logw.iter_mut().for_each(|w| *w -= lse);
        let yv = DVector::from_column_slice(y);
        let mut comps = Vec::with_capacity(self.n_components());
        for k in 0..self.n_components() {
            let mean = &self.maps[k] * &yv + &self.offsets[k];
            let chol = self.post_chol[k].clone();
            let d = mean.len() as f64;
            let log_norm =
                -0.5 * (d * crate::linalg::LN_2PI + crate::linalg::log_det_from_lower(&chol));
            comps.push(Gaussian {
                mean,
                chol,
                log_norm,
            });
        }
        let weights = logw.iter().map(|w| w.exp()).collect();
        Ok(ConditionedPosterior {
            log_weights: logw,
            weights,
            comps,
        })
    }

    pub fn posterior_logpdf(&self, y: &[f64], theta: &[f64]) -> Result<f64> {
        if theta.len() != self.theta_dim() || theta.iter().any(|v| !v.is_finite()) {
            return input("θ has wrong length or non-finite entries");
        }
        Ok(self.condition(y)?.logpdf(theta))
    }

    pub fn posterior_sample(&self, y: &[f64], n: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        let post = self.condition(y)?;
        let mut rng = seeded(seed);
        Ok((0..n).map(|_| post.sample(&mut rng)).collect())
    }

    /// Exact marginal of `q(θ | y)` onto the coordinates in `keep` (0-based, any order).
    pub fn marginalize(&self, keep: &[usize]) -> Result<InverseMixture> {
        let l = self.theta_dim();
        if keep.is_empty() {
            return input("marginalization needs at least one kept coordinate");
        }
        let mut seen = vec![false; l];
        for &i in keep {
            if i >= l || seen[i] {
                return input(format!(
                    "invalid or repeated coordinate {i} for θ of length {l}"
                ));
            }
            seen[i] = true;
        }
        let maps = self.maps.iter().map(|a| a.select_rows(keep)).collect();
        let offsets = self.offsets.iter().map(|b| b.select_rows(keep)).collect();
        let post_covs = self
            .post_covs
            .iter()
            .map(|s| s.select_rows(keep).select_columns(keep))
            .collect();
        InverseMixture::new(
            self.weights.clone(),
            self.y_means.clone(),
            self.y_covs.clone(),
            maps,
            offsets,
            post_covs,
        )
    }

    /// Read the inverse parameters as a forward mixture with the roles of θ and y swapped.
    pub fn swapped(&self) -> Result<ExpertMixture> {
        ExpertMixture::new(
            self.weights.clone(),
            self.y_means.clone(),
            self.y_covs.clone(),
            self.maps.clone(),
            self.offsets.clone(),
            self.post_covs.clone(),
            CovStructure::Full,
        )
    }
}

/// `q(θ | y_o) = Σ_k ω_k(y_o) N(θ; A_k y_o + b_k, Σ_k)` for one fixed observation.
#[derive(Debug, Clone)]
pub struct ConditionedPosterior {
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    comps: Vec<Gaussian>,
}

impl ConditionedPosterior {
    pub fn dim(&self) -> usize {
        self.comps[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn component_means(&self) -> Vec<&DVector<f64>> {
        self.comps.iter().map(|c| &c.mean).collect()
    }

    pub fn logpdf(&self, theta: &[f64]) -> f64 {
        let t: Vec<f64> = self
            .comps
            .iter()
            .zip(&self.log_weights)
            .filter(|(_, w)| w.is_finite())
            .map(|(c, w)| w + c.logpdf(theta))
            .collect();
        log_sum_exp(&t)
    }

    /// Categorical draw on `ω_k`, then a Gaussian draw from that component.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.weights.len() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = k;
                break;
            }
        }
        while self.weights[pick] == 0.0 && pick > 0 {
            pick -= 1;
        }
        self.comps[pick].sample(rng)
    }

    /// Mean of the mixture.
    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for (c, w) in self.comps.iter().zip(&self.weights) {
            m.axpy(*w, &c.mean, 1.0);
        }
        m
    }
}
