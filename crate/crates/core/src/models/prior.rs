use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::{PopulationParams, ThetaLayout};
use crate::error::{input, Result};
use crate::linalg::normal_logpdf;
use crate::samplers::NormalGammaParams;

/// Prior on one population coordinate `(μ_j, τ_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationPrior {
    NormalGamma {
        mu0: f64,
        lambda: f64,
        alpha: f64,
        beta: f64,
    },
    /// `μ ~ N(mu0, sigma²)` and `τ ~ Gamma(alpha, rate beta)`, independently.
    Independent {
        mu0: f64,
        sigma: f64,
        alpha: f64,
        beta: f64,
    },
}

impl PopulationPrior {
    pub fn normal_gamma(&self) -> Option<NormalGammaParams> {
        match *self {
            PopulationPrior::NormalGamma {
                mu0,
                lambda,
                alpha,
                beta,
            } => Some(NormalGammaParams {
                mu0,
                lambda,
                alpha,
                beta,
            }),
            PopulationPrior::Independent { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            PopulationPrior::NormalGamma {
                mu0,
                lambda,
                alpha,
                beta,
            } => NormalGammaParams {
                mu0,
                lambda,
                alpha,
                beta,
            }
            .validate(),
            PopulationPrior::Independent {
                mu0,
                sigma,
                alpha,
                beta,
            } => {
                if !mu0.is_finite() {
                    return input("population prior mu0 must be finite");
                }
                for (name, v) in [("sigma", sigma), ("alpha", alpha), ("beta", beta)] {
                    if !(v > 0.0 && v.is_finite()) {
                        return input(format!("population prior {name} must be positive, got {v}"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match *self {
            PopulationPrior::NormalGamma { .. } => self.normal_gamma().unwrap().sample(rng),
            PopulationPrior::Independent {
                mu0,
                sigma,
                alpha,
                beta,
            } => {
                let mu = Normal::new(mu0, sigma).expect("validated").sample(rng);
                let tau = Gamma::new(alpha, 1.0 / beta)
                    .expect("validated")
                    .sample(rng)
                    .max(f64::MIN_POSITIVE);
                (mu, tau)
            }
        }
    }

    /// Density of `(μ, τ)` with respect to Lebesgue measure on `ℝ × (0, ∞)`.
    pub fn logpdf(&self, mu: f64, tau: f64) -> f64 {
        match *self {
            PopulationPrior::NormalGamma { .. } => self.normal_gamma().unwrap().logpdf(mu, tau),
            PopulationPrior::Independent {
                mu0,
                sigma,
                alpha,
                beta,
            } => {
                if !(tau > 0.0) {
                    return f64::NEG_INFINITY;
                }
                normal_logpdf(mu, mu0, sigma * sigma) + alpha * beta.ln() - ln_gamma(alpha)
                    + (alpha - 1.0) * tau.ln()
                    - beta * tau
            }
        }
    }

    pub fn tau_mean(&self) -> f64 {
        match *self {
            PopulationPrior::NormalGamma { alpha, beta, .. }
            | PopulationPrior::Independent { alpha, beta, .. } => alpha / beta,
        }
    }
}

/// Gaussian prior on one log-scale shared parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPrior {
    pub mean: f64,
    pub sd: f64,
}

/// Priors for a full model: population coordinates, shared parameters and
/// optional bounds on the shared block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub population: Vec<PopulationPrior>,
    #[serde(default)]
    pub fixed: Vec<FixedPrior>,
    /// Empty, or one optional `[lower, upper]` per shared coordinate.
    #[serde(default)]
    pub support: Vec<Option<[f64; 2]>>,
}

impl PriorSpec {
    pub fn validate(&self, layout: ThetaLayout) -> Result<()> {
        if self.population.len() != layout.q {
            return input(format!(
                "{} population priors for {} random effects",
                self.population.len(),
                layout.q
            ));
        }
        if self.fixed.len() != layout.shared() {
            return input(format!(
                "{} shared priors for {} shared parameters",
                self.fixed.len(),
                layout.shared()
            ));
        }
        if !self.support.is_empty() && self.support.len() != layout.shared() {
            return input("support bounds must be empty or cover every shared parameter");
        }
        for p in &self.population {
            p.validate()?;
        }
        for f in &self.fixed {
            if !f.mean.is_finite() || !(f.sd > 0.0 && f.sd.is_finite()) {
                return input(format!(
                    "shared prior needs finite mean and positive sd, got {f:?}"
                ));
            }
        }
        for [lo, hi] in self.support.iter().flatten() {
            if !(lo < hi) {
                return input(format!("support bound [{lo}, {hi}] is empty"));
            }
        }
        Ok(())
    }

    /// Per-coordinate Normal–Gamma parameters, if every coordinate has one.
    pub fn normal_gamma_all(&self) -> Option<Vec<NormalGammaParams>> {
        self.population.iter().map(|p| p.normal_gamma()).collect()
    }

    pub fn sample_eta<R: Rng + ?Sized>(&self, rng: &mut R) -> PopulationParams {
        let (mu, tau): (Vec<f64>, Vec<f64>) = self.population.iter().map(|p| p.sample(rng)).unzip();
        PopulationParams { mu, tau }
    }

    pub fn eta_logpdf(&self, eta: &PopulationParams) -> f64 {
        self.population
            .iter()
            .zip(eta.mu.iter().zip(&eta.tau))
            .map(|(p, (m, t))| p.logpdf(*m, *t))
            .sum()
    }

    fn bounds(&self, j: usize) -> Option<[f64; 2]> {
        self.support.get(j).copied().flatten()
    }

    pub fn in_support(&self, shared: &[f64]) -> bool {
        shared
            .iter()
            .enumerate()
            .all(|(j, x)| match self.bounds(j) {
                Some([lo, hi]) => *x >= lo && *x <= hi,
                None => x.is_finite(),
            })
    }

    /// Draw the shared block from its (possibly truncated) Gaussian prior.
    pub fn sample_fixed<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.fixed
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let n = Normal::new(f.mean, f.sd).expect("validated");
                match self.bounds(j) {
                    None => n.sample(rng),
                    Some([lo, hi]) => loop {
                        let x = n.sample(rng);
                        if x >= lo && x <= hi {
                            break x;
                        }
                        if truncated_mass(f, lo, hi) < 1e-6 {
                            break rng.random_range(lo..=hi);
                        }
                    },
                }
            })
            .collect()
    }

    /// Normalized log density of the shared block; `-inf` outside the support.
    pub fn fixed_logpdf(&self, shared: &[f64]) -> f64 {
        let mut lp = 0.0;
        for (j, (f, x)) in self.fixed.iter().zip(shared).enumerate() {
            match self.bounds(j) {
                None => lp += normal_logpdf(*x, f.mean, f.sd * f.sd),
                Some([lo, hi]) => {
                    if *x < lo || *x > hi {
                        return f64::NEG_INFINITY;
                    }
                    lp += normal_logpdf(*x, f.mean, f.sd * f.sd) - truncated_mass(f, lo, hi).ln();
                }
            }
        }
        lp
    }

    /// Gradient of [`Self::fixed_logpdf`] inside the support.
    pub fn fixed_logpdf_grad(&self, shared: &[f64]) -> Vec<f64> {
        self.fixed
            .iter()
            .zip(shared)
            .map(|(f, x)| -(x - f.mean) / (f.sd * f.sd))
            .collect()
    }

    /// Draw `(η, θ)` with `θ = (c, κ, ξ)`, `c ~ N(μ, τ⁻¹)`.
    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> (PopulationParams, Vec<f64>) {
        let eta = self.sample_eta(rng);
        let mut theta: Vec<f64> = eta
            .mu
            .iter()
            .zip(&eta.tau)
            .map(|(m, t)| {
                Normal::new(*m, 1.0 / t.sqrt())
                    .expect("positive precision")
                    .sample(rng)
            })
            .collect();
        theta.extend(self.sample_fixed(rng));
        (eta, theta)
    }

    /// Joint log density of `(η, θ)`.
    pub fn logpdf(&self, eta: &PopulationParams, theta: &[f64]) -> f64 {
        let q = self.population.len();
        self.eta_logpdf(eta) + eta.logpdf(&theta[..q]) + self.fixed_logpdf(&theta[q..])
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn truncated_mass(f: &FixedPrior, lo: f64, hi: f64) -> f64 {
    std_normal_cdf((hi - f.mean) / f.sd) - std_normal_cdf((lo - f.mean) / f.sd)
}
