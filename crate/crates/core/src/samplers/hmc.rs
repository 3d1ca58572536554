use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    pub leapfrog_steps: usize,
    pub step_size: f64,
    /// Number of transitions during which the step size is adapted.
    pub adapt_iters: usize,
    pub target_accept: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            leapfrog_steps: 20,
            step_size: 0.05,
            adapt_iters: 0,
            target_accept: 0.8,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return input("HMC step size must be positive");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return input("HMC target acceptance must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcStep {
    pub next: Vec<f64>,
    pub accepted: bool,
    pub accept_prob: f64,
    /// `H(end) − H(start)`; `+inf` for a diverging trajectory.
    pub delta_h: f64,
}

/// Dual-averaging constants.
const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

/// Fixed-length HMC with identity mass matrix and dual-averaging step-size adaptation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Hmc {
    cfg: HmcConfig,
    step_size: f64,
    iter: usize,
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
}

impl Hmc {
    pub fn new(cfg: HmcConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            step_size: cfg.step_size,
            iter: 0,
            mu: (10.0 * cfg.step_size).ln(),
            h_bar: 0.0,
            log_eps_bar: 0.0,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn adapting(&self) -> bool {
        self.iter < self.cfg.adapt_iters
    }

    /// One transition. `f` returns the log target and its gradient.
    pub fn step<F, R>(&mut self, current: &[f64], f: F, rng: &mut R) -> HmcStep
    where
        F: Fn(&[f64]) -> (f64, DVector<f64>),
        R: Rng,
    {
        let jitter = rng.random_range(0.8..1.2);
        let out = transition(
            current,
            &f,
            self.step_size * jitter,
            self.cfg.leapfrog_steps,
            rng,
        );
        if self.adapting() {
            self.iter += 1;
            let m = self.iter as f64;
            let w = 1.0 / (m + T0);
            self.h_bar = (1.0 - w) * self.h_bar + w * (self.cfg.target_accept - out.accept_prob);
            let log_eps = self.mu - m.sqrt() / GAMMA * self.h_bar;
            let eta = m.powf(-KAPPA);
            self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
            self.step_size = if self.adapting() {
                log_eps.exp()
            } else {
                self.log_eps_bar.exp()
            };
        }
        out
    }
}

/// `L` leapfrog steps from `(x, p)`; returns the end point, momentum, log target and gradient.
pub fn leapfrog<F>(
    x: &[f64],
    p: &DVector<f64>,
    eps: f64,
    steps: usize,
    f: &F,
) -> (DVector<f64>, DVector<f64>, f64, DVector<f64>)
where
    F: Fn(&[f64]) -> (f64, DVector<f64>),
{
    let mut q = DVector::from_column_slice(x);
    let mut mom = p.clone();
    let (mut lp, mut g) = f(q.as_slice());
    for _ in 0..steps {
        mom.axpy(0.5 * eps, &g, 1.0);
        q.axpy(eps, &mom, 1.0);
        let (l2, g2) = f(q.as_slice());
        lp = l2;
        g = g2;
        if !lp.is_finite() || g.iter().any(|v| !v.is_finite()) {
            break;
        }
        mom.axpy(0.5 * eps, &g, 1.0);
    }
    (q, mom, lp, g)
}

fn transition<F, R>(current: &[f64], f: &F, eps: f64, steps: usize, rng: &mut R) -> HmcStep
where
    F: Fn(&[f64]) -> (f64, DVector<f64>),
    R: Rng,
{
    let p0 = DVector::from_fn(current.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let u: f64 = rng.random();
    if steps == 0 {
        return HmcStep {
            next: current.to_vec(),
            accepted: true,
            accept_prob: 1.0,
            delta_h: 0.0,
        };
    }
    let (lp0, _) = f(current);
    let (q, p, lp1, g1) = leapfrog(current, &p0, eps, steps, f);
    let h0 = -lp0 + 0.5 * p0.norm_squared();
    let h1 = -lp1 + 0.5 * p.norm_squared();
    let delta_h = h1 - h0;
    if !delta_h.is_finite() || g1.iter().any(|v| !v.is_finite()) {
        return HmcStep {
            next: current.to_vec(),
            accepted: false,
            accept_prob: 0.0,
            delta_h: f64::INFINITY,
        };
    }
    let accept_prob = (-delta_h).exp().min(1.0);
    if u < accept_prob {
        HmcStep {
            next: q.as_slice().to_vec(),
            accepted: true,
            accept_prob,
            delta_h,
        }
    } else {
        HmcStep {
            next: current.to_vec(),
            accepted: false,
            accept_prob,
            delta_h,
        }
    }
}

/// Stateless single transition with a fixed step size.
pub fn hmc_step<F>(current: &[f64], f: F, cfg: &HmcConfig, seed: u64) -> Result<HmcStep>
where
    F: Fn(&[f64]) -> (f64, DVector<f64>),
{
    cfg.validate()?;
    let mut rng = seeded(seed);
    Ok(transition(
        current,
        &f,
        cfg.step_size,
        cfg.leapfrog_steps,
        &mut rng,
    ))
}
