use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::euler::{euler_maruyama_step, DiagonalSde};
use super::{FixedPrior, PopulationPrior, PriorSpec, Simulator, ThetaLayout};
use crate::error::{input, Result};
use crate::rng::SimRng;

/// Named parameters of the mRNA transfection model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrnaParam {
    Delta,
    Gamma,
    K,
    T0,
    M0,
    Scale,
    Offset,
    Sigma,
}

impl MrnaParam {
    pub const ALL: [MrnaParam; 8] = [
        MrnaParam::Delta,
        MrnaParam::Gamma,
        MrnaParam::K,
        MrnaParam::T0,
        MrnaParam::M0,
        MrnaParam::Scale,
        MrnaParam::Offset,
        MrnaParam::Sigma,
    ];

    fn slot(self) -> usize {
        MrnaParam::ALL.iter().position(|p| *p == self).unwrap()
    }
}

/// Translation kinetics after transfection: mRNA `m` decays at rate δ and is
/// translated into protein `p` at rate k, which degrades at rate γ. The state is
/// zero before the release time t₀ and `m(t₀) = m₀`. Only `log(scale·p + offset)`
/// is observed, with Gaussian error of standard deviation σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrnaModel {
    times: Vec<f64>,
    em_step: f64,
    layout: ThetaLayout,
    /// θ index → parameter, every entry on the log scale.
    order: Vec<MrnaParam>,
    /// Natural-scale values of parameters not in θ.
    fixed: Vec<(MrnaParam, f64)>,
}

struct Kinetics {
    delta: f64,
    gamma: f64,
    k: f64,
}

impl DiagonalSde for Kinetics {
    fn dim(&self) -> usize {
        2
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -self.delta * x[0];
        out[1] = self.k * x[0] - self.gamma * x[1];
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        out[0] = (self.delta * x[0]).max(0.0).sqrt();
        out[1] = (self.k * x[0] + self.gamma * x[1]).max(0.0).sqrt();
    }
    fn project(&self, x: &mut [f64]) {
        x[0] = x[0].max(0.0);
        x[1] = x[1].max(0.0);
    }
}

impl MrnaModel {
    pub fn new(
        times: Vec<f64>,
        em_step: f64,
        layout: ThetaLayout,
        order: Vec<MrnaParam>,
        fixed: Vec<(MrnaParam, f64)>,
    ) -> Result<Self> {
        if times.is_empty()
            || times.windows(2).any(|w| w[1] <= w[0])
            || times.iter().any(|t| !t.is_finite())
        {
            return input("mRNA times must be nonempty, finite and strictly increasing");
        }
        if !(em_step > 0.0) {
            return input("Euler step must be positive");
        }
        let min_gap = times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if em_step > min_gap + 1e-12 {
            return input("Euler step exceeds the smallest observation spacing");
        }
        if order.len() != layout.len() {
            return input(format!(
                "{} θ names for a layout of length {}",
                order.len(),
                layout.len()
            ));
        }
        let mut seen = [0usize; 8];
        for p in order.iter().chain(fixed.iter().map(|(p, _)| p)) {
            seen[p.slot()] += 1;
        }
        if seen.iter().any(|&n| n != 1) {
            return input("every mRNA parameter must be either inferred or fixed, exactly once");
        }
        for (p, v) in &fixed {
            let ok = match p {
                MrnaParam::T0 => *v >= 0.0,
                _ => *v > 0.0,
            };
            if !ok || !v.is_finite() {
                return input(format!("fixed value for {p:?} out of range: {v}"));
            }
        }
        Ok(Self {
            times,
            em_step,
            layout,
            order,
            fixed,
        })
    }

    /// Random effects (δ, γ, k); fixed effects (m₀, scale, offset); noise σ; t₀ = 0.
    pub fn simulated_setup(times: Vec<f64>, em_step: f64) -> Result<Self> {
        use MrnaParam::*;
        Self::new(
            times,
            em_step,
            ThetaLayout { q: 3, p: 3, s: 1 },
            vec![Delta, Gamma, K, M0, Scale, Offset, Sigma],
            vec![(T0, 0.0)],
        )
    }

    /// Random effects (δ, γ, k, t₀); fixed effects (m₀, scale, offset); noise σ.
    pub fn real_data_setup(times: Vec<f64>, em_step: f64) -> Result<Self> {
        use MrnaParam::*;
        Self::new(
            times,
            em_step,
            ThetaLayout { q: 4, p: 3, s: 1 },
            vec![Delta, Gamma, K, T0, M0, Scale, Offset, Sigma],
            vec![],
        )
    }

    /// Every parameter is a random effect.
    pub fn random_effects_setup(times: Vec<f64>, em_step: f64) -> Result<Self> {
        Self::new(
            times,
            em_step,
            ThetaLayout { q: 8, p: 0, s: 0 },
            MrnaParam::ALL.to_vec(),
            vec![],
        )
    }

    pub fn order(&self) -> &[MrnaParam] {
        &self.order
    }

    pub fn em_step(&self) -> f64 {
        self.em_step
    }

    /// Natural-scale values in [`MrnaParam::ALL`] order.
    pub fn resolve(&self, theta: &[f64]) -> [f64; 8] {
        let mut v = [0.0; 8];
        for (p, x) in &self.fixed {
            v[p.slot()] = *x;
        }
        for (p, x) in self.order.iter().zip(theta) {
            v[p.slot()] = x.exp();
        }
        v
    }

    /// Run the Euler scheme and report `(m, p)` at every observation time.
    /// `visit` sees every internal state after projection.
    pub fn latent_path(
        &self,
        theta: &[f64],
        rng: &mut SimRng,
        mut visit: impl FnMut(f64, f64),
    ) -> Vec<(f64, f64)> {
        let v = self.resolve(theta);
        let sde = Kinetics {
            delta: v[0],
            gamma: v[1],
            k: v[2],
        };
        let (t0, m0) = (v[3], v[4]);
        let h = self.em_step;
        let mut x = [m0, 0.0];
        let mut done = 0usize;
        let mut scratch = [0.0; 4];
        self.times
            .iter()
            .map(|&tj| {
                if tj < t0 {
                    return (0.0, 0.0);
                }
                let target = ((tj - t0) / h + 1e-9).floor() as usize;
                while done < target {
                    euler_maruyama_step(&sde, &mut x, h, &mut scratch, rng);
                    visit(x[0], x[1]);
                    done += 1;
                }
                (x[0], x[1])
            })
            .collect()
    }
}

impl Simulator for MrnaModel {
    fn name(&self) -> &'static str {
        "mrna"
    }
    fn layout(&self) -> ThetaLayout {
        self.layout
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn times(&self) -> &[f64] {
        &self.times
    }
    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let v = self.resolve(theta);
        let (scale, offset, sigma) = (v[5], v[6], v[7]);
        let path = self.latent_path(theta, rng, |_, _| {});
        path.into_iter()
            .map(|(_, p)| {
                let e: f64 = StandardNormal.sample(rng);
                (scale * p + offset).ln() + sigma * e
            })
            .collect()
    }
}

fn ng(mu0: f64) -> PopulationPrior {
    PopulationPrior::NormalGamma {
        mu0,
        lambda: 1.0,
        alpha: 2.0,
        beta: 0.5,
    }
}

const SHARED_PRIOR_MEANS: [f64; 4] = [5.0, 1.0, 3.0, -1.5];

/// Priors of [`MrnaModel::simulated_setup`]: Normal–Gamma `(μ₀, 1, 2, 0.5)` for log(δ, γ, k)
/// with `μ₀ = (−0.694, −3, 0.027)`, and `N(5,1)`, `N(1,1)`, `N(3,1)`, `N(−1.5,1)` for
/// log(m₀, scale, offset, σ).
pub fn mrna_simulated_priors() -> PriorSpec {
    PriorSpec {
        population: vec![ng(-0.694), ng(-3.0), ng(0.027)],
        fixed: SHARED_PRIOR_MEANS
            .iter()
            .map(|&mean| FixedPrior { mean, sd: 1.0 })
            .collect(),
        support: Vec::new(),
    }
}

/// Priors of [`MrnaModel::real_data_setup`]: independent `μ ~ N(μ₀, σ²)`, `τ ~ Gamma(2, 0.5)`
/// per random effect and `log σ ~ N(−1, 1)`.
pub fn mrna_real_data_priors() -> PriorSpec {
    let ind = |mu0, sigma| PopulationPrior::Independent {
        mu0,
        sigma,
        alpha: 2.0,
        beta: 0.5,
    };
    let mut fixed: Vec<FixedPrior> = SHARED_PRIOR_MEANS
        .iter()
        .map(|&mean| FixedPrior { mean, sd: 1.0 })
        .collect();
    fixed[3].mean = -1.0;
    PriorSpec {
        population: vec![ind(-1.0, 1.0), ind(-5.0, 2.0), ind(0.5, 1.0), ind(0.0, 1.0)],
        fixed,
        support: Vec::new(),
    }
}

/// Priors of [`MrnaModel::random_effects_setup`]: Normal–Gamma `(μ₀, 1, 2, 0.5)` on all eight
/// log-parameters, centred where the simulated setup centres them and at 0 for log t₀.
pub fn mrna_random_effects_priors() -> PriorSpec {
    let mut population = vec![ng(-0.694), ng(-3.0), ng(0.027), ng(0.0)];
    population.extend(SHARED_PRIOR_MEANS.iter().map(|&m| ng(m)));
    PriorSpec {
        population,
        fixed: Vec::new(),
        support: Vec::new(),
    }
}
