use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{FixedPrior, IndividualRecord, PopulationPrior, PriorSpec, Simulator, ThetaLayout};
use crate::error::{input, Result};
use crate::linalg::normal_logpdf;
use crate::rng::SimRng;

/// Exact OU transition: `c₂ + (x − c₂)e^{−c₁Δ} + c₃ √((1 − e^{−2c₁Δ}) / (2c₁)) · u`.
pub fn ou_exact_step(x: f64, c1: f64, c2: f64, c3: f64, dt: f64, noise: f64) -> f64 {
    let (mean, var) = ou_moments(x, c1, c2, c3, dt);
    mean + var.sqrt() * noise
}

/// Conditional mean and variance of `X_{t+Δ}` given `X_t = x`.
fn ou_moments(x: f64, c1: f64, c2: f64, c3: f64, dt: f64) -> (f64, f64) {
    let decay = (-c1 * dt).exp();
    let var = c3 * c3 * (-(-2.0 * c1 * dt).exp_m1()) / (2.0 * c1);
    (c2 + (x - c2) * decay, var)
}

/// OU state-space model observed with additive Gaussian noise, started at `X₀ = 0` at `t = 0`.
///
/// θ = `(log c₁, log c₂, log c₃, log ξ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuModel {
    times: Vec<f64>,
}

impl OuModel {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return input("OU times must be nonempty, nonnegative and strictly increasing");
        }
        Ok(Self { times })
    }

    /// Exact log-likelihood of one record.
    pub fn kalman_loglik(&self, record: &IndividualRecord, theta: &[f64]) -> f64 {
        ou_kalman_loglik(&record.times, record.flat(), theta)
    }
}

impl Simulator for OuModel {
    fn name(&self) -> &'static str {
        "ou"
    }
    fn layout(&self) -> ThetaLayout {
        ThetaLayout { q: 3, p: 0, s: 1 }
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn times(&self) -> &[f64] {
        &self.times
    }
    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let (c1, c2, c3, xi) = (
            theta[0].exp(),
            theta[1].exp(),
            theta[2].exp(),
            theta[3].exp(),
        );
        let mut x = 0.0;
        let mut t = 0.0;
        self.times
            .iter()
            .map(|&tj| {
                x = ou_exact_step(x, c1, c2, c3, tj - t, StandardNormal.sample(rng));
                t = tj;
                let e: f64 = StandardNormal.sample(rng);
                x + xi * e
            })
            .collect()
    }
}

/// Normal–Gamma population priors `(0,1,6,2)`, `(1.5,1,6,1)`, `(0,1,6,2)` and `log ξ ~ N(0, 1)`.
pub fn ou_default_priors() -> PriorSpec {
    let ng = |mu0, beta| PopulationPrior::NormalGamma {
        mu0,
        lambda: 1.0,
        alpha: 6.0,
        beta,
    };
    PriorSpec {
        population: vec![ng(0.0, 2.0), ng(1.5, 1.0), ng(0.0, 2.0)],
        fixed: vec![FixedPrior { mean: 0.0, sd: 1.0 }],
        support: Vec::new(),
    }
}

/// Kalman-filter log-likelihood `log p(y | c, ξ)` of scalar observations at `times`.
pub fn ou_kalman_loglik(times: &[f64], obs: &[f64], theta: &[f64]) -> f64 {
    let (c1, c2, c3) = (theta[0].exp(), theta[1].exp(), theta[2].exp());
    let r = (2.0 * theta[3]).exp();
    let (mut m, mut p, mut t) = (0.0, 0.0, 0.0);
    let mut ll = 0.0;
    for (&tj, &y) in times.iter().zip(obs) {
        let (mp, q) = ou_moments(m, c1, c2, c3, tj - t);
        let decay = (-c1 * (tj - t)).exp();
        let pp = p * decay * decay + q;
        let s = pp + r;
        ll += normal_logpdf(y, mp, s);
        let gain = pp / s;
        m = mp + gain * (y - mp);
        p = (1.0 - gain) * pp;
        t = tj;
    }
    ll
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::uniform_grid;
    use crate::rng::seeded;

    #[test]
    fn zero_step_returns_state() {
        assert_eq!(ou_exact_step(1.7, 0.5, 2.0, 3.0, 0.0, 0.9), 1.7);
    }

    #[test]
    fn deterministic_relaxation() {
        let x = ou_exact_step(0.0, 1.0, 2.0, 0.0, 2f64.ln(), 1.3);
        assert!((x - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transition_moments() {
        let mut rng = seeded(1);
        let n = 1_000_000;
        let (mut s, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = ou_exact_step(0.0, 1.0, 0.0, 1.0, 1.0, StandardNormal.sample(&mut rng));
            s += x;
            s2 += x * x;
            s4 += x.powi(4);
        }
        let nf = n as f64;
        let var_true = (1.0 - (-2.0f64).exp()) / 2.0;
        let mean = s / nf;
        let var = s2 / nf - mean * mean;
        assert!(mean.abs() < 3.0 * (var_true / nf).sqrt());
        let se_var = ((s4 / nf - var * var) / nf).sqrt();
        assert!((var - var_true).abs() < 3.0 * se_var, "{var} vs {var_true}");
    }

    #[test]
    fn small_noise_limits() {
        let model = OuModel::new(uniform_grid(0.2, 0.2, 50)).unwrap();
        let mut rng = seeded(2);
        let y = model.simulate(&[(-0.7f64), 2.3, -0.9, -30.0], &mut rng);
        assert!(y.iter().all(|v| v.is_finite()));
        let c1 = (-0.7f64).exp();
        let c2 = 2.3f64.exp();
        let y = model.simulate(&[-0.7, 2.3, -60.0, -30.0], &mut rng);
        for (t, v) in model.times().iter().zip(&y) {
            assert!((v - c2 * (1.0 - (-c1 * t).exp())).abs() < 1e-10);
        }
    }

    #[test]
    fn observation_mean_at_final_time() {
        let model = OuModel::new(uniform_grid(0.2, 0.2, 50)).unwrap();
        let theta = [-0.7, 2.3, -0.9, -1.2];
        let (c1, c2) = ((-0.7f64).exp(), 2.3f64.exp());
        let mut rng = seeded(3);
        let n = 10_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let y = model.simulate(&theta, &mut rng)[49];
            s += y;
            s2 += y * y;
        }
        let m = s / n as f64;
        let se = ((s2 / n as f64 - m * m) / n as f64).sqrt();
        let want = c2 * (1.0 - (-c1 * 10.0).exp());
        assert!((m - want).abs() < 3.0 * se, "{m} vs {want}");
        assert!((m - c2).abs() < 0.1);
    }

    #[test]
    fn kalman_single_observation_closed_form() {
        let theta = [0.2f64, 1.0, -0.5, -1.0];
        let (c1, c2, c3, xi) = (
            theta[0].exp(),
            theta[1].exp(),
            theta[2].exp(),
            theta[3].exp(),
        );
        let t1 = 0.7;
        let m1 = c2 * (1.0 - (-c1 * t1).exp());
        let v1 = c3 * c3 * (1.0 - (-2.0 * c1 * t1).exp()) / (2.0 * c1);
        let want = normal_logpdf(1.9, m1, v1 + xi * xi);
        assert!((ou_kalman_loglik(&[t1], &[1.9], &theta) - want).abs() < 1e-13);
    }

    #[test]
    fn kalman_two_observations_quadrature() {
        let theta = [0.1f64, 0.5, -0.2, -0.8];
        let (c1, c2, c3, xi) = (
            theta[0].exp(),
            theta[1].exp(),
            theta[2].exp(),
            theta[3].exp(),
        );
        let (t, y) = ([0.5, 1.3], [0.9, 1.6]);
        let (m1, v1) = ou_moments(0.0, c1, c2, c3, t[0]);
        let r = xi * xi;
        let (n, half) = (1200usize, 7.0);
        let s1 = v1.sqrt();
        let (lo1, h1) = (m1 - half * s1, 2.0 * half * s1 / n as f64);
        let mut total = 0.0;
        for i in 0..n {
            let x1 = lo1 + (i as f64 + 0.5) * h1;
            let (m2, v2) = ou_moments(x1, c1, c2, c3, t[1] - t[0]);
            let s2 = v2.sqrt();
            let (lo2, h2) = (m2 - half * s2, 2.0 * half * s2 / n as f64);
            let f1 = (normal_logpdf(x1, m1, v1) + normal_logpdf(y[0], x1, r)).exp();
            let mut inner = 0.0;
            for k in 0..n {
                let x2 = lo2 + (k as f64 + 0.5) * h2;
                inner += (normal_logpdf(x2, m2, v2) + normal_logpdf(y[1], x2, r)).exp() * h2;
            }
            total += f1 * inner * h1;
        }
        let got = ou_kalman_loglik(&t, &y, &theta);
        assert!((got - total.ln()).abs() < 1e-4, "{got} vs {}", total.ln());
    }

    #[test]
    fn kalman_is_continuous() {
        let times = uniform_grid(0.2, 0.2, 50);
        let model = OuModel::new(times.clone()).unwrap();
        let mut rng = seeded(5);
        let theta = [-0.7, 2.3, -0.9, -1.2];
        let y = model.simulate(&theta, &mut rng);
        let a = ou_kalman_loglik(&times, &y, &theta);
        let b = ou_kalman_loglik(
            &times,
            &y,
            &[-0.7 + 1e-8, 2.3 - 1e-8, -0.9 + 1e-8, -1.2 + 1e-8],
        );
        assert_eq!(a, ou_kalman_loglik(&times, &y, &theta));
        assert!((a - b).abs() < 1e-4);
    }
}
