//! Effective sample sizes, posterior-predictive bands and chain comparison.

mod compare;
mod ess;
mod predictive;

pub use compare::{compare_chains, compare_columns, wasserstein1, ParameterComparison};
pub use ess::{ess_multivariate, ess_univariate, mc_standard_error, EssEstimate};
pub use predictive::{mean_coverage, percentile_sorted, posterior_predictive, PredictiveBand};

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::SampleTable;
use crate::error::{input, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub ess: f64,
    pub mc_se: f64,
    pub degenerate: bool,
}

pub fn summarize_column(name: &str, x: &[f64]) -> Result<ParameterSummary> {
    let est = ess_univariate(x)?;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ParameterSummary {
        name: name.to_string(),
        mean,
        sd,
        q025: percentile_sorted(&sorted, 0.025),
        q975: percentile_sorted(&sorted, 0.975),
        ess: est.ess,
        mc_se: sd / est.ess.sqrt(),
        degenerate: est.degenerate,
    })
}

pub fn summarize(table: &SampleTable) -> Result<Vec<ParameterSummary>> {
    table
        .parameter_names()
        .into_iter()
        .map(|name| summarize_column(name, &table.column(name).expect("listed column")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub parameters: Vec<String>,
    pub ess: Vec<f64>,
    pub ess_per_sec: Vec<f64>,
    /// Over the population and shared columns; absent when the chain is too short for them.
    pub multivariate_ess: Option<f64>,
    pub wall_time: f64,
}

/// ESS of every parameter column; `wall_time` is the time that produced the chain.
pub fn ess_report(table: &SampleTable, wall_time: f64) -> Result<EssReport> {
    let parameters: Vec<String> = table
        .parameter_names()
        .into_iter()
        .map(String::from)
        .collect();
    if parameters.is_empty() {
        return input("sample table has no parameter columns");
    }
    let ess = parameters
        .iter()
        .map(|p| Ok(ess_univariate(&table.column(p).expect("listed column"))?.ess))
        .collect::<Result<Vec<_>>>()?;
    let ess_per_sec = ess
        .iter()
        .map(|e| {
            if wall_time > 0.0 {
                e / wall_time
            } else {
                f64::NAN
            }
        })
        .collect();
    let global: Vec<usize> = parameters
        .iter()
        .filter(|p| !p.starts_with("c_"))
        .map(|p| table.index(p).unwrap())
        .collect();
    let rows: Vec<Vec<f64>> = table
        .rows
        .iter()
        .map(|r| global.iter().map(|&j| r[j]).collect())
        .collect();
    let multivariate_ess = if global.is_empty() {
        None
    } else {
        ess_multivariate(&rows).ok()
    };
    Ok(EssReport {
        parameters,
        ess,
        ess_per_sec,
        multivariate_ess,
        wall_time,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[ParameterSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "parameter",
        "mean",
        "sd",
        "q025",
        "q975",
        "ess",
        "mc_se",
        "degenerate",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            num(r.mean),
            num(r.sd),
            num(r.q025),
            num(r.q975),
            num(r.ess),
            num(r.mc_se),
            r.degenerate.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ess_csv(path: impl AsRef<Path>, report: &EssReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["parameter", "ess", "ess_per_sec"])
        .map_err(csv_err)?;
    for ((p, e), s) in report
        .parameters
        .iter()
        .zip(&report.ess)
        .zip(&report.ess_per_sec)
    {
        w.write_record([p.clone(), num(*e), num(*s)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per individual, time and observed component.
pub fn write_bands_csv(path: impl AsRef<Path>, bands: &[PredictiveBand]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["individual_id", "time", "component", "lower", "upper"])
        .map_err(csv_err)?;
    for b in bands {
        for (t, &time) in b.times.iter().enumerate() {
            for k in 0..b.obs_dim {
                let j = t * b.obs_dim + k;
                w.write_record([
                    b.id.clone(),
                    num(time),
                    (k + 1).to_string(),
                    num(b.lower[j]),
                    num(b.upper[j]),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparison_csv(path: impl AsRef<Path>, rows: &[ParameterComparison]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "parameter",
        "mean_a",
        "mean_b",
        "mean_delta",
        "sd_a",
        "sd_b",
        "sd_delta",
        "w1",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            num(r.mean_a),
            num(r.mean_b),
            num(r.mean_delta),
            num(r.sd_a),
            num(r.sd_b),
            num(r.sd_delta),
            num(r.w1),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}
