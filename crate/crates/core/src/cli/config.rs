//! Experiment configuration files.
//!
//! A config is one JSON object:
//!
//! ```text
//! model        required  { kind: "ou" | "mrna", setup?, times: { first, step, n }, em_step? }
//!                        setup (mrna only): "simulated" | "real_data" | "random_effects"
//! priors       required  { population: [..], fixed?: [{ mean, sd }], support?: [null | [lo, hi]] }
//!                        population entries: { kind: "normal_gamma", mu0, lambda, alpha, beta }
//!                                         or { kind: "independent", mu0, sigma, alpha, beta }
//! run          required  { n_prior, n_gibbs, rounds, k_init, seed, k_grid?, cov_structure?,
//!                          variant?, hmc?, em_max_iter?, em_tol?, discard?, refit_final? }
//!                        hmc: { leapfrog_steps?, step_size?, adapt_iters?, target_accept? }
//! truth        optional  { individuals, mu, tau, shared?, seed? }       (simulate)
//! exact        optional  { sweeps, burn_in, seed, thin?, hmc? }         (fit-exact-ou)
//! diagnostics  optional  { n_sims?, seed? }                              (diagnose)
//! threads      optional  worker threads, 0 for one per core
//! ```
//!
//! Unknown and missing keys are all reported together as a schema error.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::engine::{ExactConfig, RunConfig};
use crate::error::{Error, Result};
use crate::models::{uniform_grid, MrnaModel, OuModel, PopulationParams, PriorSpec, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ou,
    Mrna,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrnaSetup {
    Simulated,
    RealData,
    RandomEffects,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub first: f64,
    pub step: f64,
    pub n: usize,
}

fn default_em_step() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup: Option<MrnaSetup>,
    pub times: TimeGrid,
    #[serde(default = "default_em_step")]
    pub em_step: f64,
}

impl ModelConfig {
    pub fn times(&self) -> Result<Vec<f64>> {
        let TimeGrid { first, step, n } = self.times;
        if n == 0 || !(step > 0.0) || !first.is_finite() || first < 0.0 {
            return Err(Error::Input(format!(
                "time grid needs n > 0, step > 0 and first >= 0, got {:?}",
                self.times
            )));
        }
        Ok(uniform_grid(first, step, n))
    }

    pub fn build(&self) -> Result<Box<dyn Simulator>> {
        let times = self.times()?;
        match (self.kind, self.setup) {
            (ModelKind::Ou, None) => Ok(Box::new(OuModel::new(times)?)),
            (ModelKind::Ou, Some(_)) => Err(Error::Input(
                "model.setup applies to the mrna model only".into(),
            )),
            (ModelKind::Mrna, setup) => Ok(Box::new(match setup.unwrap_or(MrnaSetup::Simulated) {
                MrnaSetup::Simulated => MrnaModel::simulated_setup(times, self.em_step)?,
                MrnaSetup::RealData => MrnaModel::real_data_setup(times, self.em_step)?,
                MrnaSetup::RandomEffects => MrnaModel::random_effects_setup(times, self.em_step)?,
            })),
        }
    }
}

/// Data-generating values for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub individuals: usize,
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
    #[serde(default)]
    pub shared: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl TruthConfig {
    pub fn eta(&self) -> Result<PopulationParams> {
        PopulationParams::new(self.mu.clone(), self.tau.clone())
    }
}

fn default_n_sims() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "default_n_sims")]
    pub n_sims: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            n_sims: default_n_sims(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub priors: PriorSpec,
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactConfig>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub threads: usize,
}

struct Field {
    name: &'static str,
    required: bool,
    node: Node,
}

enum Node {
    Leaf,
    Object(&'static [Field]),
    Array(&'static Node),
    PopulationPrior,
}

const fn req(name: &'static str, node: Node) -> Field {
    Field {
        name,
        required: true,
        node,
    }
}

const fn opt(name: &'static str, node: Node) -> Field {
    Field {
        name,
        required: false,
        node,
    }
}

const HMC: &[Field] = &[
    opt("leapfrog_steps", Node::Leaf),
    opt("step_size", Node::Leaf),
    opt("adapt_iters", Node::Leaf),
    opt("target_accept", Node::Leaf),
];

const TIMES: &[Field] = &[
    req("first", Node::Leaf),
    req("step", Node::Leaf),
    req("n", Node::Leaf),
];

const MODEL: &[Field] = &[
    req("kind", Node::Leaf),
    opt("setup", Node::Leaf),
    req("times", Node::Object(TIMES)),
    opt("em_step", Node::Leaf),
];

const FIXED: &[Field] = &[req("mean", Node::Leaf), req("sd", Node::Leaf)];

const PRIORS: &[Field] = &[
    req("population", Node::Array(&Node::PopulationPrior)),
    opt("fixed", Node::Array(&Node::Object(FIXED))),
    opt("support", Node::Leaf),
];

const RUN: &[Field] = &[
    req("n_prior", Node::Leaf),
    req("n_gibbs", Node::Leaf),
    req("rounds", Node::Leaf),
    req("k_init", Node::Leaf),
    req("seed", Node::Leaf),
    opt("k_grid", Node::Leaf),
    opt("cov_structure", Node::Leaf),
    opt("variant", Node::Leaf),
    opt("hmc", Node::Object(HMC)),
    opt("em_max_iter", Node::Leaf),
    opt("em_tol", Node::Leaf),
    opt("discard", Node::Leaf),
    opt("refit_final", Node::Leaf),
];

const TRUTH: &[Field] = &[
    req("individuals", Node::Leaf),
    req("mu", Node::Leaf),
    req("tau", Node::Leaf),
    opt("shared", Node::Leaf),
    opt("seed", Node::Leaf),
];

const EXACT: &[Field] = &[
    req("sweeps", Node::Leaf),
    req("burn_in", Node::Leaf),
    req("seed", Node::Leaf),
    opt("thin", Node::Leaf),
    opt("hmc", Node::Object(HMC)),
];

const DIAGNOSTICS: &[Field] = &[opt("n_sims", Node::Leaf), opt("seed", Node::Leaf)];

const TOP: &[Field] = &[
    req("model", Node::Object(MODEL)),
    req("priors", Node::Object(PRIORS)),
    req("run", Node::Object(RUN)),
    opt("truth", Node::Object(TRUTH)),
    opt("exact", Node::Object(EXACT)),
    opt("diagnostics", Node::Object(DIAGNOSTICS)),
    opt("threads", Node::Leaf),
];

const NORMAL_GAMMA: &[Field] = &[
    req("kind", Node::Leaf),
    req("mu0", Node::Leaf),
    req("lambda", Node::Leaf),
    req("alpha", Node::Leaf),
    req("beta", Node::Leaf),
];

const INDEPENDENT: &[Field] = &[
    req("kind", Node::Leaf),
    req("mu0", Node::Leaf),
    req("sigma", Node::Leaf),
    req("alpha", Node::Leaf),
    req("beta", Node::Leaf),
];

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn walk_object(value: &Value, fields: &[Field], path: &str, problems: &mut Vec<String>) {
    let Some(obj) = value.as_object() else {
        problems.push(format!(
            "`{}` must be an object",
            if path.is_empty() { "<root>" } else { path }
        ));
        return;
    };
    for key in obj.keys() {
        if !fields.iter().any(|f| f.name == key) {
            problems.push(format!("unknown key `{}`", join(path, key)));
        }
    }
    for f in fields {
        match obj.get(f.name) {
            Some(v) => walk(v, &f.node, &join(path, f.name), problems),
            None if f.required => problems.push(format!("missing key `{}`", join(path, f.name))),
            None => {}
        }
    }
}

fn walk(value: &Value, node: &Node, path: &str, problems: &mut Vec<String>) {
    match node {
        Node::Leaf => {}
        Node::Object(fields) => walk_object(value, fields, path, problems),
        Node::Array(inner) => match value.as_array() {
            Some(items) => {
                for (i, v) in items.iter().enumerate() {
                    walk(v, inner, &format!("{path}[{i}]"), problems);
                }
            }
            None => problems.push(format!("`{path}` must be an array")),
        },
        Node::PopulationPrior => match value.get("kind").and_then(Value::as_str) {
            Some("normal_gamma") => walk_object(value, NORMAL_GAMMA, path, problems),
            Some("independent") => walk_object(value, INDEPENDENT, path, problems),
            Some(other) => problems.push(format!(
                "`{path}.kind` is {other:?}, expected \"normal_gamma\" or \"independent\""
            )),
            None => problems.push(format!("missing key `{path}.kind`")),
        },
    }
}

/// Every structural problem of a config value; empty when the keys match the schema.
pub fn schema_problems(value: &Value) -> Vec<String> {
    let mut problems = Vec::new();
    walk_object(value, TOP, "", &mut problems);
    problems
}

impl Config {
    pub fn from_value(value: Value) -> Result<Self> {
        let problems = schema_problems(&value);
        if !problems.is_empty() {
            return Err(Error::Schema(problems.join("; ")));
        }
        serde_path_to_error::deserialize(value)
            .map_err(|e| Error::Schema(format!("`{}`: {}", e.path(), e.inner())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::Schema(format!("not valid JSON: {e}")))?;
        Self::from_value(value)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Simulator and prior checks that need the model layout.
    pub fn simulator(&self) -> Result<Box<dyn Simulator>> {
        let sim = self.model.build()?;
        self.priors.validate(sim.layout())?;
        Ok(sim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "model": { "kind": "ou", "times": { "first": 0.5, "step": 0.5, "n": 4 } },
            "priors": {
                "population": [
                    { "kind": "normal_gamma", "mu0": 0.0, "lambda": 1.0, "alpha": 6.0, "beta": 2.0 },
                    { "kind": "normal_gamma", "mu0": 1.5, "lambda": 1.0, "alpha": 6.0, "beta": 1.0 },
                    { "kind": "independent", "mu0": 0.0, "sigma": 1.0, "alpha": 6.0, "beta": 2.0 }
                ],
                "fixed": [{ "mean": 0.0, "sd": 1.0 }]
            },
            "run": { "n_prior": 100, "n_gibbs": 10, "rounds": 2, "k_init": 2, "seed": 1, "hmc": { "adapt_iters": 5 } }
        })
    }

    #[test]
    fn minimal_config_parses() {
        let c = Config::from_value(minimal()).unwrap();
        assert_eq!(c.model.em_step, 0.01);
        assert_eq!(c.run.hmc.adapt_iters, 5);
        assert_eq!(c.run.hmc.leapfrog_steps, 20);
        assert_eq!(c.diagnostics, DiagnosticsConfig::default());
        assert_eq!(c.simulator().unwrap().layout().len(), 4);
        let echo = serde_json::to_value(&c).unwrap();
        assert_eq!(Config::from_value(echo).unwrap(), c);
    }

    #[test]
    fn every_offending_key_is_listed() {
        let mut v = minimal();
        v["run"].as_object_mut().unwrap().remove("n_prior");
        v["run"]["n_prio"] = json!(100);
        v["model"]["times"]["stepp"] = json!(1);
        v["priors"]["population"][1]
            .as_object_mut()
            .unwrap()
            .remove("lambda");
        v["colour"] = json!("red");
        let Err(Error::Schema(msg)) = Config::from_value(v) else {
            panic!("expected a schema error")
        };
        for needle in [
            "unknown key `run.n_prio`",
            "missing key `run.n_prior`",
            "unknown key `model.times.stepp`",
            "missing key `priors.population[1].lambda`",
            "unknown key `colour`",
        ] {
            assert!(msg.contains(needle), "{needle} not in {msg}");
        }
    }

    #[test]
    fn type_errors_name_the_path() {
        let mut v = minimal();
        v["run"]["rounds"] = json!("two");
        let Err(Error::Schema(msg)) = Config::from_value(v) else {
            panic!()
        };
        assert!(msg.contains("run.rounds"), "{msg}");
        assert!(matches!(Config::parse("{"), Err(Error::Schema(_))));
    }

    #[test]
    fn prior_layout_mismatch_is_input_error() {
        let mut v = minimal();
        v["priors"]["fixed"] = json!([]);
        let c = Config::from_value(v).unwrap();
        assert!(matches!(c.simulator(), Err(Error::Input(_))));
    }

    #[test]
    fn mrna_setups() {
        let mut v = minimal();
        v["model"] = json!({ "kind": "mrna", "setup": "random_effects", "times": { "first": 1.0, "step": 1.0, "n": 5 } });
        let c = Config::from_value(v).unwrap();
        assert_eq!(c.model.build().unwrap().layout().len(), 8);
        let mut v = minimal();
        v["model"]["setup"] = json!("simulated");
        assert!(Config::from_value(v).unwrap().model.build().is_err());
    }
}
