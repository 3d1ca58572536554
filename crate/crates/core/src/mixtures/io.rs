use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{CovStructure, ExpertMixture};
use crate::error::{Error, Result};

pub const MIXTURE_FORMAT_VERSION: u32 = 1;

/// Self-describing checkpoint of a forward mixture. Matrices are stored row-major.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MixtureFile {
    pub format_version: u32,
    pub n_components: usize,
    pub theta_dim: usize,
    pub obs_dim: usize,
    pub cov_structure: CovStructure,
    pub weights: Vec<f64>,
    pub theta_means: Vec<Vec<f64>>,
    pub theta_covs: Vec<Vec<f64>>,
    pub maps: Vec<Vec<f64>>,
    pub offsets: Vec<Vec<f64>>,
    pub noise_covs: Vec<Vec<f64>>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(rows: usize, cols: usize, v: &[f64], what: &str) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::Format(format!(
            "{what}: expected {} entries, found {}",
            rows * cols,
            v.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, v))
}

impl From<&ExpertMixture> for MixtureFile {
    fn from(m: &ExpertMixture) -> Self {
        Self {
            format_version: MIXTURE_FORMAT_VERSION,
            n_components: m.n_components(),
            theta_dim: m.theta_dim(),
            obs_dim: m.obs_dim(),
            cov_structure: m.cov_structure(),
            weights: m.weights().to_vec(),
            theta_means: m
                .theta_means()
                .iter()
                .map(|v| v.as_slice().to_vec())
                .collect(),
            theta_covs: m.theta_covs().iter().map(row_major).collect(),
            maps: m.maps().iter().map(row_major).collect(),
            offsets: m.offsets().iter().map(|v| v.as_slice().to_vec()).collect(),
            noise_covs: m.noise_covs().iter().map(row_major).collect(),
        }
    }
}

impl MixtureFile {
    pub fn into_mixture(self) -> Result<ExpertMixture> {
        if self.format_version != MIXTURE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported mixture format version {}",
                self.format_version
            )));
        }
        let (k, l, d) = (self.n_components, self.theta_dim, self.obs_dim);
        let lists = [
            self.weights.len(),
            self.theta_means.len(),
            self.theta_covs.len(),
            self.maps.len(),
            self.offsets.len(),
            self.noise_covs.len(),
        ];
        if lists.iter().any(|&n| n != k) {
            return Err(Error::Format(format!(
                "expected {k} entries in every component list"
            )));
        }
        let vec = |v: &Vec<f64>, n: usize, what: &str| {
            if v.len() == n {
                Ok(DVector::from_column_slice(v))
            } else {
                Err(Error::Format(format!(
                    "{what}: expected {n} entries, found {}",
                    v.len()
                )))
            }
        };
        ExpertMixture::new(
            self.weights,
            self.theta_means
                .iter()
                .map(|v| vec(v, l, "theta_means"))
                .collect::<Result<_>>()?,
            self.theta_covs
                .iter()
                .map(|v| from_row_major(l, l, v, "theta_covs"))
                .collect::<Result<_>>()?,
            self.maps
                .iter()
                .map(|v| from_row_major(d, l, v, "maps"))
                .collect::<Result<_>>()?,
            self.offsets
                .iter()
                .map(|v| vec(v, d, "offsets"))
                .collect::<Result<_>>()?,
            self.noise_covs
                .iter()
                .map(|v| from_row_major(d, d, v, "noise_covs"))
                .collect::<Result<_>>()?,
            self.cov_structure,
        )
    }
}

pub fn write_mixture(path: &Path, mix: &ExpertMixture) -> Result<()> {
    let text = serde_json::to_string_pretty(&MixtureFile::from(mix))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_mixture(path: &Path) -> Result<ExpertMixture> {
    let text = std::fs::read_to_string(path)?;
    let file: MixtureFile = serde_json::from_str(&text)?;
    file.into_mixture()
}
