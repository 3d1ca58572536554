use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{input, Result};
use crate::linalg::LN_2PI;

/// `μ | τ ~ N(mu0, 1/(λτ))`, `τ ~ Gamma(α, rate β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalGammaParams {
    pub mu0: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NormalGammaParams {
    pub fn new(mu0: f64, lambda: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self {
            mu0,
            lambda,
            alpha,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu0.is_finite() {
            return input("Normal-Gamma mu0 must be finite");
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return input(format!("Normal-Gamma {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    /// Conjugate update on observations `values` of one coordinate.
    pub fn posterior(&self, values: &[f64]) -> Self {
        let m = values.len() as f64;
        if values.is_empty() {
            return *self;
        }
        let mean = values.iter().sum::<f64>() / m;
        let ss: f64 = values.iter().map(|c| (c - mean).powi(2)).sum();
        let lam = self.lambda + m;
        Self {
            mu0: (self.lambda * self.mu0 + m * mean) / lam,
            lambda: lam,
            alpha: self.alpha + 0.5 * m,
            beta: self.beta + 0.5 * ss + m * self.lambda * (mean - self.mu0).powi(2) / (2.0 * lam),
        }
    }

    /// Draw `(μ, τ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let tau = Gamma::new(self.alpha, 1.0 / self.beta)
            .expect("validated shape and rate")
            .sample(rng);
        let tau = tau.max(f64::MIN_POSITIVE);
        let mu = Normal::new(self.mu0, (1.0 / (self.lambda * tau)).sqrt())
            .expect("finite scale")
            .sample(rng);
        (mu, tau)
    }

    /// Joint log-density of `(μ, τ)`.
    pub fn logpdf(&self, mu: f64, tau: f64) -> f64 {
        if !(tau > 0.0) {
            return f64::NEG_INFINITY;
        }
        self.alpha * self.beta.ln() - ln_gamma(self.alpha) + (self.alpha - 1.0) * tau.ln()
            - self.beta * tau
            + 0.5 * (self.lambda * tau).ln()
            - 0.5 * LN_2PI
            - 0.5 * self.lambda * tau * (mu - self.mu0).powi(2)
    }

    pub fn tau_mean(&self) -> f64 {
        self.alpha / self.beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn empty_update_is_identity() {
        let p = NormalGammaParams::new(0.3, 2.0, 3.0, 1.5).unwrap();
        assert_eq!(p.posterior(&[]), p);
    }

    #[test]
    fn single_value_at_prior_mean() {
        let p = NormalGammaParams::new(0.3, 2.0, 3.0, 1.5).unwrap();
        let q = p.posterior(&[0.3]);
        assert_eq!(
            q,
            NormalGammaParams {
                mu0: 0.3,
                lambda: 3.0,
                alpha: 3.5,
                beta: 1.5
            }
        );
    }

    #[test]
    fn three_value_example() {
        let q = NormalGammaParams::new(0.0, 1.0, 2.0, 1.0)
            .unwrap()
            .posterior(&[1.0, 2.0, 3.0]);
        assert!((q.mu0 - 1.5).abs() < 1e-15);
        assert_eq!(q.lambda, 4.0);
        assert_eq!(q.alpha, 3.5);
        assert!((q.beta - 3.5).abs() < 1e-15);
    }

    #[test]
    fn logpdf_integrates_to_one() {
        let p = NormalGammaParams::new(0.5, 2.0, 3.0, 2.0).unwrap();
        let (nm, nt) = (800, 800);
        let (mlo, mhi, thi) = (-5.0, 6.0, 10.0);
        let (hm, ht) = ((mhi - mlo) / nm as f64, thi / nt as f64);
        let mut z = 0.0;
        for i in 0..nm {
            for j in 0..nt {
                z += p
                    .logpdf(mlo + (i as f64 + 0.5) * hm, (j as f64 + 0.5) * ht)
                    .exp()
                    * hm
                    * ht;
            }
        }
        assert!((z - 1.0).abs() < 1e-3, "{z}");
    }

    #[test]
    fn sample_moments() {
        let p = NormalGammaParams::new(1.5, 1.0, 6.0, 2.0).unwrap();
        let mut rng = seeded(3);
        let n = 1_000_000;
        let (mut st, mut st2, mut sm, mut sm2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let (m, t) = p.sample(&mut rng);
            st += t;
            st2 += t * t;
            sm += m;
            sm2 += m * m;
        }
        let nf = n as f64;
        let (et, em) = (st / nf, sm / nf);
        let (set, sem) = (
            ((st2 / nf - et * et) / nf).sqrt(),
            ((sm2 / nf - em * em) / nf).sqrt(),
        );
        assert!((et - p.tau_mean()).abs() < 3.0 * set);
        assert!((em - p.mu0).abs() < 3.0 * sem);
    }

    #[test]
    fn rejects_nonpositive_scales() {
        assert!(NormalGammaParams::new(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(NormalGammaParams::new(0.0, 1.0, -1.0, 1.0).is_err());
        assert!(NormalGammaParams::new(f64::NAN, 1.0, 1.0, 1.0).is_err());
    }
}
