use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::gibbs::GibbsKernels;
use super::run::{PriorPredictiveReport, RoundReport};
use super::{ChainState, RunConfig};
use crate::error::{Error, Result};
use crate::mixtures::{read_mixture, write_mixture, BicRow, ExpertMixture, TrainingSet};
use crate::models::ThetaLayout;

pub(crate) const CHECKPOINT_FILE: &str = "checkpoint.json";
const POOL_FILE: &str = "pool.bin";
const POOL_MAGIC: &[u8; 8] = b"SMPLPOOL";
const CHECKPOINT_VERSION: u32 = 1;

pub(crate) fn mixture_path(dir: &Path, round: usize) -> PathBuf {
    dir.join(format!("mixture_r{round}.json"))
}

/// Everything needed to continue a run after `completed_round`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Checkpoint {
    pub format_version: u32,
    pub config: RunConfig,
    pub layout: ThetaLayout,
    pub simulator: String,
    pub n_individuals: usize,
    pub completed_round: usize,
    pub k: usize,
    pub bic: Vec<BicRow>,
    pub state: Option<ChainState>,
    pub kernels: Option<GibbsKernels>,
    pub prior_predictive: PriorPredictiveReport,
    pub reports: Vec<RoundReport>,
}

impl Checkpoint {
    pub fn matches(&self, cfg: &RunConfig, layout: ThetaLayout, simulator: &str, m: usize) -> bool {
        self.format_version == CHECKPOINT_VERSION
            && &self.config == cfg
            && self.layout == layout
            && self.simulator == simulator
            && self.n_individuals == m
    }
}

pub(crate) fn new_checkpoint(
    config: &RunConfig,
    layout: ThetaLayout,
    simulator: &str,
    n_individuals: usize,
    completed_round: usize,
    k: usize,
    bic: &[BicRow],
    prior_predictive: &PriorPredictiveReport,
) -> Checkpoint {
    Checkpoint {
        format_version: CHECKPOINT_VERSION,
        config: config.clone(),
        layout,
        simulator: simulator.to_string(),
        n_individuals,
        completed_round,
        k,
        bic: bic.to_vec(),
        state: None,
        kernels: None,
        prior_predictive: prior_predictive.clone(),
        reports: Vec::new(),
    }
}

fn write_pool(path: &Path, pool: &TrainingSet) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(POOL_MAGIC)?;
    for v in [pool.theta_dim(), pool.obs_dim(), pool.round_tag, pool.len()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for v in pool.theta_buf().iter().chain(pool.y_buf()) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_pool(path: &Path) -> Result<TrainingSet> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != POOL_MAGIC {
        return Err(Error::Format(
            "training pool file has the wrong magic bytes".into(),
        ));
    }
    let mut word = [0u8; 8];
    let mut header = [0usize; 4];
    for h in header.iter_mut() {
        r.read_exact(&mut word)?;
        *h = u64::from_le_bytes(word) as usize;
    }
    let [l, d, tag, n] = header;
    let mut read_vec = |len: usize| -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut word)?;
            v.push(f64::from_le_bytes(word));
        }
        Ok(v)
    };
    let theta = read_vec(n * l)?;
    let y = read_vec(n * d)?;
    TrainingSet::from_buffers(l, d, tag, theta, y).map_err(|e| Error::Format(e.to_string()))
}

/// Persist the mixture of `ck.completed_round`, the training pool and the checkpoint record.
/// The record is written last, through a rename, so a crash never leaves a dangling reference.
pub(crate) fn save(
    dir: &Path,
    ck: &Checkpoint,
    pool: &TrainingSet,
    mixture: &ExpertMixture,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_mixture(&mixture_path(dir, ck.completed_round), mixture)?;
    let tmp_pool = dir.join(format!("{POOL_FILE}.tmp"));
    write_pool(&tmp_pool, pool)?;
    fs::rename(&tmp_pool, dir.join(POOL_FILE))?;
    let tmp = dir.join(format!("{CHECKPOINT_FILE}.tmp"));
    fs::write(&tmp, serde_json::to_vec(ck)?)?;
    fs::rename(&tmp, dir.join(CHECKPOINT_FILE))?;
    Ok(())
}

/// Load a checkpoint with its pool and mixtures `0..=completed_round`, if one exists.
pub(crate) fn load(dir: &Path) -> Result<Option<(Checkpoint, TrainingSet, Vec<ExpertMixture>)>> {
    let path = dir.join(CHECKPOINT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let ck: Checkpoint = serde_json::from_slice(&fs::read(&path)?)?;
    let pool = read_pool(&dir.join(POOL_FILE))?;
    let mixtures = (0..=ck.completed_round)
        .map(|r| read_mixture(&mixture_path(dir, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some((ck, pool, mixtures)))
}
