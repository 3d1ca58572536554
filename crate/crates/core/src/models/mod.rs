//! Generative models, priors and dataset I/O.
//!
//! Every parameter vector is carried on the log scale in the order
//! `(c, κ, ξ)`: random effects, shared dynamical parameters, shared noise
//! parameters. Simulators exponentiate internally.

mod data;
mod euler;
mod mrna;
mod ou;
mod prior;

pub use data::{format_records, parse_records, read_records, write_records};
pub use euler::{euler_maruyama_step, DiagonalSde};
pub use mrna::{
    mrna_random_effects_priors, mrna_real_data_priors, mrna_simulated_priors, MrnaModel, MrnaParam,
};
pub use ou::{ou_default_priors, ou_exact_step, ou_kalman_loglik, OuModel};
pub use prior::{FixedPrior, PopulationPrior, PriorSpec};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::linalg::LN_2PI;
use crate::rng::SimRng;

/// Block sizes of a parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaLayout {
    pub q: usize,
    pub p: usize,
    pub s: usize,
}

impl ThetaLayout {
    pub fn new(q: usize, p: usize, s: usize) -> Result<Self> {
        if q == 0 {
            return input("at least one random effect is required");
        }
        Ok(Self { q, p, s })
    }
    pub fn len(&self) -> usize {
        self.q + self.p + self.s
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Number of shared coordinates `p + s`.
    pub fn shared(&self) -> usize {
        self.p + self.s
    }
    pub fn c_indices(&self) -> Vec<usize> {
        (0..self.q).collect()
    }
}

/// One parameter point split into its blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub c: Vec<f64>,
    pub kappa: Vec<f64>,
    pub xi: Vec<f64>,
}

impl ThetaVector {
    pub fn from_flat(layout: ThetaLayout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.len() {
            return input(format!(
                "θ has length {}, layout expects {}",
                flat.len(),
                layout.len()
            ));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return input("θ has non-finite entries");
        }
        let (q, p) = (layout.q, layout.p);
        Ok(Self {
            c: flat[..q].to_vec(),
            kappa: flat[q..q + p].to_vec(),
            xi: flat[q + p..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.c.clone();
        v.extend_from_slice(&self.kappa);
        v.extend_from_slice(&self.xi);
        v
    }
}

/// One subject's observations. `obs` is time-major: `obs[j * obs_dim + r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub id: String,
    pub times: Vec<f64>,
    pub obs_dim: usize,
    pub obs: Vec<f64>,
}

impl IndividualRecord {
    pub fn new(
        id: impl Into<String>,
        times: Vec<f64>,
        obs_dim: usize,
        obs: Vec<f64>,
    ) -> Result<Self> {
        if times.is_empty() {
            return input("a record needs at least one time point");
        }
        if obs_dim == 0 || obs.len() != times.len() * obs_dim {
            return input("observation matrix does not match the time grid");
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return input("times must be finite and strictly increasing");
        }
        Ok(Self {
            id: id.into(),
            times,
            obs_dim,
            obs,
        })
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Flattened observation vector of length `obs_dim · n`.
    pub fn flat(&self) -> &[f64] {
        &self.obs
    }
}

/// Population mean and precision of the log-scale random effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
}

impl PopulationParams {
    pub fn new(mu: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        if mu.len() != tau.len() || mu.is_empty() {
            return input("population mean and precision must have equal nonzero length");
        }
        if tau.iter().any(|t| !(*t > 0.0 && t.is_finite())) || mu.iter().any(|m| !m.is_finite()) {
            return input("population precisions must be positive and means finite");
        }
        Ok(Self { mu, tau })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Draw one random-effect vector `c ~ N(μ, diag(τ)⁻¹)`.
    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.tau)
            .map(|(m, t)| {
                Normal::new(*m, 1.0 / t.sqrt())
                    .expect("positive precision")
                    .sample(rng)
            })
            .collect()
    }

    pub fn logpdf(&self, c: &[f64]) -> f64 {
        self.mu
            .iter()
            .zip(&self.tau)
            .zip(c)
            .map(|((m, t), x)| 0.5 * (t.ln() - LN_2PI) - 0.5 * t * (x - m).powi(2))
            .sum()
    }
}

/// A simulator of one individual's flattened observation vector given θ.
pub trait Simulator: Sync + Send {
    fn name(&self) -> &'static str;
    fn layout(&self) -> ThetaLayout;
    fn obs_dim(&self) -> usize;
    fn times(&self) -> &[f64];
    /// Flattened observations (time-major) of length `obs_dim · n`. Non-finite output signals a failed simulation.
    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Vec<f64>;

    fn data_dim(&self) -> usize {
        self.obs_dim() * self.times().len()
    }

    fn simulate_record(
        &self,
        id: &str,
        theta: &[f64],
        rng: &mut SimRng,
    ) -> Result<IndividualRecord> {
        IndividualRecord::new(
            id,
            self.times().to_vec(),
            self.obs_dim(),
            self.simulate(theta, rng),
        )
    }
}

/// Observed individuals drawn from a known population, with their true random effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPopulation {
    pub eta: PopulationParams,
    pub shared: Vec<f64>,
    pub ids: Vec<String>,
    pub c_all: Vec<Vec<f64>>,
    #[serde(skip)]
    pub records: Vec<IndividualRecord>,
}

/// Draw `m` individuals `c⁽ⁱ⁾ ~ N(μ, τ⁻¹)` and simulate each one, ids `1..=m`.
pub fn simulate_population(
    sim: &dyn Simulator,
    eta: &PopulationParams,
    shared: &[f64],
    m: usize,
    seed: u64,
) -> Result<SimulatedPopulation> {
    let layout = sim.layout();
    if eta.dim() != layout.q || shared.len() != layout.shared() {
        return input("population truth does not match the simulator layout");
    }
    let mut ids = Vec::with_capacity(m);
    let mut c_all = Vec::with_capacity(m);
    let mut records = Vec::with_capacity(m);
    for i in 0..m {
        let mut rng = crate::rng::stream(seed, &[crate::rng::tag::DATA, i as u64]);
        let c = eta.sample(&mut rng);
        let mut theta = c.clone();
        theta.extend_from_slice(shared);
        let id = (i + 1).to_string();
        let rec = sim.simulate_record(&id, &theta, &mut rng)?;
        if rec.obs.iter().any(|v| !v.is_finite()) {
            return Err(crate::error::Error::Simulator { rate: 1.0 });
        }
        ids.push(id);
        c_all.push(c);
        records.push(rec);
    }
    Ok(SimulatedPopulation {
        eta: eta.clone(),
        shared: shared.to_vec(),
        ids,
        c_all,
        records,
    })
}

/// Equidistant grid `first, first + step, …` with `n` points.
pub fn uniform_grid(first: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| first + step * j as f64).collect()
}
