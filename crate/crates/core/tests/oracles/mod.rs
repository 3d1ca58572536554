//! Reference computations for the acceptance suite, written without the library's own
//! linear algebra or filtering code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use semple_core::mixtures::{CovStructure, ExpertMixture};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Linear-interpolated quantile of a sample.
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let h = p * (s.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Multivariate normal log-density by explicit inverse and determinant.
pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let inv = cov.clone().try_inverse().expect("invertible covariance");
    let r = x - mean;
    let quad = (r.transpose() * inv * &r)[(0, 0)];
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + quad)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log Σₖ πₖ N(θ; cₖ, Γₖ) N(y; Aₖθ + bₖ, Σₖ)`.
pub fn naive_joint_logpdf(mix: &ExpertMixture, y: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    let terms: Vec<f64> = (0..mix.n_components())
        .map(|k| {
            mix.weights()[k].ln()
                + mvn_logpdf(theta, &mix.theta_means()[k], &mix.theta_covs()[k])
                + mvn_logpdf(
                    y,
                    &(&mix.maps()[k] * theta + &mix.offsets()[k]),
                    &mix.noise_covs()[k],
                )
        })
        .collect();
    log_sum_exp(&terms)
}

/// `log q̃(y | θ)` straight from the forward parameters.
pub fn naive_surrogate_loglik(mix: &ExpertMixture, y: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    let gate: Vec<f64> = (0..mix.n_components())
        .map(|k| {
            mix.weights()[k].ln() + mvn_logpdf(theta, &mix.theta_means()[k], &mix.theta_covs()[k])
        })
        .collect();
    naive_joint_logpdf(mix, y, theta) - log_sum_exp(&gate)
}

fn random_spd(r: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * r.random_range(0.2..1.0)
}

pub fn random_mixture(r: &mut impl Rng, k: usize, l: usize, d: usize) -> ExpertMixture {
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / s).collect();
    let fix = 1.0 - w.iter().sum::<f64>();
    w[0] += fix;
    ExpertMixture::new(
        w,
        (0..k)
            .map(|_| DVector::from_fn(l, |_, _| r.random_range(-2.0..2.0)))
            .collect(),
        (0..k).map(|_| random_spd(r, l)).collect(),
        (0..k)
            .map(|_| DMatrix::from_fn(d, l, |_, _| r.random_range(-1.5..1.5)))
            .collect(),
        (0..k)
            .map(|_| DVector::from_fn(d, |_, _| r.random_range(-1.0..1.0)))
            .collect(),
        (0..k).map(|_| random_spd(r, d)).collect(),
        CovStructure::Full,
    )
    .expect("valid random mixture")
}

/// Slope and intercept of the least-squares line.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Coefficient of determination of a least-squares line.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let (a, b) = ols(x, y);
    let my = mean(y);
    let ss_res: f64 = x.iter().zip(y).map(|(u, v)| (v - a * u - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

fn npdf(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

/// OU transition from `x` over `dt`: mean and variance.
fn ou_transition(x: f64, c1: f64, c2: f64, c3: f64, dt: f64) -> (f64, f64) {
    let e = (-c1 * dt).exp();
    (c2 + (x - c2) * e, c3 * c3 * (1.0 - e * e) / (2.0 * c1))
}

/// `log p(y₁, y₂)` for the OU model started at 0, by a two-dimensional midpoint rule over the latent states.
pub fn ou_two_point_quadrature(times: [f64; 2], obs: [f64; 2], theta: [f64; 4]) -> f64 {
    let (c1, c2, c3) = (theta[0].exp(), theta[1].exp(), theta[2].exp());
    let r = (2.0 * theta[3]).exp();
    let (m1, v1) = ou_transition(0.0, c1, c2, c3, times[0]);
    let n = 1500;
    let half = 9.0;
    let grid = |m: f64, v: f64| -> (Vec<f64>, f64) {
        let s = v.sqrt();
        let h = 2.0 * half * s / n as f64;
        (
            (0..n)
                .map(|i| m - half * s + (i as f64 + 0.5) * h)
                .collect(),
            h,
        )
    };
    let (xs1, h1) = grid(m1, v1);
    let mut total = 0.0;
    for &x1 in &xs1 {
        let w1 = npdf(x1, m1, v1) * npdf(obs[0], x1, r) * h1;
        if w1 == 0.0 {
            continue;
        }
        let (m2, v2) = ou_transition(x1, c1, c2, c3, times[1] - times[0]);
        let (xs2, h2) = grid(m2, v2);
        let inner: f64 = xs2
            .iter()
            .map(|&x2| npdf(x2, m2, v2) * npdf(obs[1], x2, r))
            .sum::<f64>()
            * h2;
        total += w1 * inner;
    }
    total.ln()
}

/// Bootstrap particle filter log-likelihood estimate for the OU model.
pub fn ou_particle_filter(
    times: &[f64],
    obs: &[f64],
    theta: [f64; 4],
    particles: usize,
    r: &mut impl Rng,
) -> f64 {
    let (c1, c2, c3) = (theta[0].exp(), theta[1].exp(), theta[2].exp());
    let var_obs = (2.0 * theta[3]).exp();
    let mut x = vec![0.0; particles];
    let mut w = vec![0.0; particles];
    let mut t = 0.0;
    let mut ll = 0.0;
    for (&tj, &y) in times.iter().zip(obs) {
        for xi in x.iter_mut() {
            let (m, v) = ou_transition(*xi, c1, c2, c3, tj - t);
            let z: f64 = StandardNormal.sample(r);
            *xi = m + v.sqrt() * z;
        }
        for (wi, xi) in w.iter_mut().zip(&x) {
            *wi = npdf(y, *xi, var_obs);
        }
        let s: f64 = w.iter().sum();
        ll += (s / particles as f64).ln();
        // systematic resampling
        let u0: f64 = r.random::<f64>() / particles as f64;
        let mut next = Vec::with_capacity(particles);
        let mut cum = w[0] / s;
        let mut j = 0;
        for i in 0..particles {
            let u = u0 + i as f64 / particles as f64;
            while u > cum && j + 1 < particles {
                j += 1;
                cum += w[j] / s;
            }
            next.push(x[j]);
        }
        x = next;
        t = tj;
    }
    ll
}

pub fn ar1(n: usize, rho: f64, r: &mut impl Rng) -> Vec<f64> {
    let mut x = StandardNormal.sample(r);
    let sd = (1.0 - rho * rho).sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(r);
            x = rho * x + sd * z;
            x
        })
        .collect()
}

pub fn iid_normal(n: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Normal–Gamma `(μ₀, λ, α, β)` log-density, written out by hand.
pub fn ng_logpdf(mu: f64, tau: f64, mu0: f64, lambda: f64, alpha: f64, beta: f64) -> f64 {
    alpha * beta.ln() - ln_gamma(alpha) + (alpha - 1.0) * tau.ln() - beta * tau
        + 0.5 * (lambda * tau / (2.0 * std::f64::consts::PI)).ln()
        - 0.5 * lambda * tau * (mu - mu0).powi(2)
}
