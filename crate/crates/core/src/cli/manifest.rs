use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::write_json;
use crate::engine::RoundReport;
use crate::error::{Error, Result};

/// Per-round entry of a fit manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub round: usize,
    /// Components of the mixture this round sampled with.
    pub k_used: usize,
    /// Components left after pruning in the mixture fitted at the end of the round.
    pub k_fitted: Option<usize>,
    pub pool_size: usize,
    pub wall_secs: f64,
    pub sampling_secs: f64,
    pub fit_secs: f64,
    pub mean_step1_acceptance: Option<f64>,
    pub min_step1_acceptance: Option<f64>,
    pub shared_acceptance: Option<f64>,
    pub eta_acceptance: Option<f64>,
    pub support_rejections: usize,
    pub sim_failures: u64,
}

impl From<&RoundReport> for RoundEntry {
    fn from(r: &RoundReport) -> Self {
        Self {
            round: r.round,
            k_used: r.k_used,
            k_fitted: r.k_fitted,
            pool_size: r.pool_size,
            wall_secs: r.sampling_secs + r.fit_secs,
            sampling_secs: r.sampling_secs,
            fit_secs: r.fit_secs,
            mean_step1_acceptance: r.mean_step1_acceptance(),
            min_step1_acceptance: r.step1_acceptance.iter().copied().reduce(f64::min),
            shared_acceptance: r.shared_acceptance,
            eta_acceptance: r.eta_acceptance,
            support_rejections: r.rejections.iter().sum(),
            sim_failures: r.sim_failures,
        }
    }
}

/// Record of one command invocation. Artifact paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub config: Value,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<RoundEntry>,
    /// Command-specific results.
    #[serde(default)]
    pub summary: Value,
    pub wall_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: usize, config: Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            threads,
            config,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            rounds: Vec::new(),
            summary: Value::Null,
            wall_secs: 0.0,
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("manifest_{}.json", command.replace('-', "_"))
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs
            .insert(name.to_string(), path.display().to_string());
    }

    pub fn artifact(&mut self, name: impl Into<String>, relative: impl Into<String>) {
        self.artifacts.insert(name.into(), relative.into());
    }

    /// Write into `dir` after checking that every listed artifact exists.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        for (name, rel) in &self.artifacts {
            if !dir.join(rel).is_file() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("artifact {name} ({rel}) was not written"),
                )));
            }
        }
        let path = dir.join(Self::file_name(&self.command));
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
