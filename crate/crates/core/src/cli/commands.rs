use std::fs;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use super::config::{Config, ModelKind};
use super::manifest::{RoundEntry, RunManifest};
use super::relative;
use crate::diagnostics::{
    compare_chains, ess_report, mean_coverage, posterior_predictive, summarize, write_bands_csv,
    write_comparison_csv, write_ess_csv, write_json, write_summary_csv,
};
use crate::engine::{
    read_samples, round0, run_exact_reference_ou, run_semple, write_samples, RunConfig,
};
use crate::error::{Error, Result};
use crate::mixtures::BicRow;
use crate::models::{read_records, simulate_population, write_records, IndividualRecord};

/// Name the file in I/O errors.
pub(crate) fn at(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    }
}

fn echo(cfg: &Config) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn ids(records: &[IndividualRecord]) -> Vec<String> {
    records.iter().map(|r| r.id.clone()).collect()
}

fn opt_num<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `k, k_fitted, loglik, n_params, bic, selected, error`, one row per requested K.
pub fn write_bic_csv(path: &Path, rows: &[BicRow], selected: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record([
        "k", "k_fitted", "loglik", "n_params", "bic", "selected", "error",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            r.k_requested.to_string(),
            opt_num(r.k_fitted),
            r.loglik.map(|v| format!("{v:.16e}")).unwrap_or_default(),
            opt_num(r.n_params),
            r.bic.map(|v| format!("{v:.16e}")).unwrap_or_default(),
            (r.k_requested == selected).to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// `2-14` (inclusive range) or a comma-separated list.
pub fn parse_k_grid(s: &str) -> Result<Vec<usize>> {
    let bad = || {
        Error::Input(format!(
            "K grid {s:?} is neither `lo-hi` nor a comma-separated list"
        ))
    };
    let grid: Vec<usize> = match s.split_once('-') {
        Some((lo, hi)) => {
            let (lo, hi): (usize, usize) = (
                lo.trim().parse().map_err(|_| bad())?,
                hi.trim().parse().map_err(|_| bad())?,
            );
            (lo..=hi).collect()
        }
        None => s
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?,
    };
    if grid.is_empty() || grid.contains(&0) {
        return Err(bad());
    }
    Ok(grid)
}

/// Dataset CSV and ground truth from the config's `truth` section.
pub fn cmd_simulate(cfg: &Config, out: &Path) -> Result<std::path::PathBuf> {
    let start = Instant::now();
    let truth = cfg
        .truth
        .as_ref()
        .ok_or_else(|| Error::Schema("missing key `truth` required by simulate".into()))?;
    let sim = cfg.model.build()?;
    let pop = simulate_population(
        sim.as_ref(),
        &truth.eta()?,
        &truth.shared,
        truth.individuals,
        truth.seed,
    )?;
    fs::create_dir_all(out)?;
    write_records(out.join("data.csv"), &pop.records)?;
    write_json(out.join("truth.json"), &pop)?;
    let mut m = RunManifest::new("simulate", truth.seed, cfg.threads, echo(cfg));
    m.artifact("data", "data.csv");
    m.artifact("truth", "truth.json");
    m.summary = json!({ "individuals": pop.records.len(), "times": sim.times().len(), "rows": pop.records.len() * sim.times().len() });
    m.wall_secs = start.elapsed().as_secs_f64();
    log::info!(
        "simulated {} individuals into {}",
        pop.records.len(),
        out.display()
    );
    m.write(out)
}

/// SeMPLE rounds `0..=R`; final samples in `samples_r{R}.csv`, mixtures and checkpoint under `checkpoint/`.
pub fn cmd_fit(cfg: &Config, data: &Path, out: &Path) -> Result<std::path::PathBuf> {
    let start = Instant::now();
    let sim = cfg.simulator()?;
    let observed = read_records(data).map_err(at(data))?;
    let ck = out.join("checkpoint");
    fs::create_dir_all(&ck)?;
    log::info!(
        "fitting {} individuals with {:?}, R = {}",
        observed.len(),
        cfg.run.variant,
        cfg.run.rounds
    );
    let res = run_semple(&observed, &cfg.priors, sim.as_ref(), &cfg.run, Some(&ck))?;
    let samples = format!("samples_r{}.csv", cfg.run.rounds);
    write_samples(
        out.join(&samples),
        &res.samples,
        &ids(&observed),
        sim.layout(),
    )?;

    let mut m = RunManifest::new("fit", cfg.run.seed, cfg.threads, echo(cfg));
    m.input("data", data);
    m.artifact("samples", samples);
    if !res.prior_predictive.bic.is_empty() {
        write_bic_csv(&out.join("bic_r0.csv"), &res.prior_predictive.bic, res.k)?;
        m.artifact("bic", "bic_r0.csv");
    }
    for r in 0..res.mixtures.len() {
        let f = ck.join(format!("mixture_r{r}.json"));
        if f.is_file() {
            m.artifact(format!("mixture_r{r}"), relative(out, &f));
        }
    }
    m.artifact("checkpoint", relative(out, &ck.join("checkpoint.json")));
    m.artifact("training_pool", relative(out, &ck.join("pool.bin")));
    m.rounds = res.rounds.iter().map(RoundEntry::from).collect();
    m.summary = json!({
        "k": res.k,
        "resumed_after": res.resumed_after,
        "n_samples": res.samples.len(),
        "prior_predictive": res.prior_predictive,
    });
    m.wall_secs = start.elapsed().as_secs_f64();
    m.write(out)
}

/// Exact Kalman-likelihood reference chain in `exact_samples.csv`.
pub fn cmd_fit_exact_ou(cfg: &Config, data: &Path, out: &Path) -> Result<std::path::PathBuf> {
    if cfg.model.kind != ModelKind::Ou {
        return Err(Error::Input(
            "fit-exact-ou needs model.kind = \"ou\"".into(),
        ));
    }
    let exact = cfg
        .exact
        .as_ref()
        .ok_or_else(|| Error::Schema("missing key `exact` required by fit-exact-ou".into()))?;
    let start = Instant::now();
    let sim = cfg.simulator()?;
    let observed = read_records(data).map_err(at(data))?;
    fs::create_dir_all(out)?;
    let res = run_exact_reference_ou(&observed, &cfg.priors, exact)?;
    write_samples(
        out.join("exact_samples.csv"),
        &res.samples,
        &ids(&observed),
        sim.layout(),
    )?;
    let mut m = RunManifest::new("fit-exact-ou", exact.seed, cfg.threads, echo(cfg));
    m.input("data", data);
    m.artifact("samples", "exact_samples.csv");
    let mean_step1 =
        res.step1_acceptance.iter().sum::<f64>() / res.step1_acceptance.len().max(1) as f64;
    m.summary = json!({
        "n_samples": res.samples.len(),
        "mean_step1_acceptance": mean_step1,
        "step1_acceptance": res.step1_acceptance,
        "shared_acceptance": res.shared_acceptance,
        "sampling_secs": res.wall_secs,
    });
    m.wall_secs = start.elapsed().as_secs_f64();
    m.write(out)
}

/// BIC table over `grid` on `run.n_prior` prior-predictive pairs.
pub fn cmd_bic_scan(cfg: &Config, grid: &[usize], out: &Path) -> Result<std::path::PathBuf> {
    let start = Instant::now();
    let sim = cfg.simulator()?;
    let run = RunConfig {
        k_grid: grid.to_vec(),
        ..cfg.run.clone()
    };
    let r0 = round0(&cfg.priors, sim.as_ref(), &run)?;
    fs::create_dir_all(out)?;
    write_bic_csv(&out.join("bic.csv"), &r0.bic, r0.k)?;
    let mut m = RunManifest::new("bic-scan", run.seed, cfg.threads, echo(cfg));
    m.artifact("bic", "bic.csv");
    m.summary = json!({ "k_grid": grid, "k_selected": r0.k, "n_pairs": r0.data.len(), "sim_failures": r0.sim_failures });
    m.wall_secs = start.elapsed().as_secs_f64();
    log::info!("BIC selects K = {}", r0.k);
    m.write(out)
}

fn wall_time_near(samples: &Path) -> Option<f64> {
    let dir = samples.parent()?;
    if let Ok(m) = RunManifest::read(dir.join(RunManifest::file_name("fit"))) {
        return m.rounds.last().map(|r| r.sampling_secs);
    }
    let m = RunManifest::read(dir.join(RunManifest::file_name("fit-exact-ou"))).ok()?;
    m.summary.get("sampling_secs")?.as_f64()
}

/// Summary, ESS and posterior-predictive band reports for a samples file.
pub fn cmd_diagnose(
    cfg: &Config,
    samples: &Path,
    data: &Path,
    wall_time: Option<f64>,
    out: &Path,
) -> Result<std::path::PathBuf> {
    let start = Instant::now();
    let sim = cfg.simulator()?;
    let observed = read_records(data).map_err(at(data))?;
    let table = read_samples(samples).map_err(at(samples))?;
    let (sample_ids, states) = table.to_states(sim.layout())?;
    if sample_ids != ids(&observed) {
        return Err(Error::Input(
            "samples and dataset list different individuals".into(),
        ));
    }
    let wall = wall_time
        .or_else(|| wall_time_near(samples))
        .filter(|w| *w > 0.0)
        .ok_or_else(|| Error::Input("no positive sampling time: pass --wall-time or keep the fit manifest next to the samples".into()))?;
    fs::create_dir_all(out)?;
    let summary = summarize(&table)?;
    let ess = ess_report(&table, wall)?;
    let bands = posterior_predictive(
        &states,
        sim.as_ref(),
        &observed,
        cfg.diagnostics.n_sims,
        cfg.diagnostics.seed,
    )?;
    write_summary_csv(out.join("summary.csv"), &summary)?;
    write_ess_csv(out.join("ess.csv"), &ess)?;
    write_json(out.join("ess.json"), &ess)?;
    write_bands_csv(out.join("bands.csv"), &bands)?;
    let coverage = json!({
        "mean_coverage": mean_coverage(&bands),
        "individuals": bands.iter().map(|b| json!({ "id": b.id, "coverage": b.coverage_fraction })).collect::<Vec<_>>(),
    });
    write_json(out.join("coverage.json"), &coverage)?;

    let mut m = RunManifest::new("diagnose", cfg.diagnostics.seed, cfg.threads, echo(cfg));
    m.input("samples", samples);
    m.input("data", data);
    for (name, file) in [
        ("summary", "summary.csv"),
        ("ess", "ess.csv"),
        ("ess_json", "ess.json"),
        ("bands", "bands.csv"),
        ("coverage", "coverage.json"),
    ] {
        m.artifact(name, file);
    }
    m.summary = json!({ "n_samples": table.len(), "wall_time": wall, "multivariate_ess": ess.multivariate_ess, "mean_coverage": mean_coverage(&bands) });
    m.wall_secs = start.elapsed().as_secs_f64();
    m.write(out)
}

/// `comparison.csv` with moments and W₁ of every shared parameter column.
pub fn cmd_compare(a: &Path, b: &Path, out: &Path) -> Result<std::path::PathBuf> {
    let start = Instant::now();
    let rows = compare_chains(
        &read_samples(a).map_err(at(a))?,
        &read_samples(b).map_err(at(b))?,
    )?;
    fs::create_dir_all(out)?;
    write_comparison_csv(out.join("comparison.csv"), &rows)?;
    let mut m = RunManifest::new("compare", 0, 0, Value::Null);
    m.input("a", a);
    m.input("b", b);
    m.artifact("comparison", "comparison.csv");
    let worst = rows
        .iter()
        .max_by(|x, y| x.w1.total_cmp(&y.w1))
        .map(|r| json!({ "parameter": r.name, "w1": r.w1 }));
    m.summary = json!({ "parameters": rows.len(), "max_w1": worst });
    m.wall_secs = start.elapsed().as_secs_f64();
    m.write(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_grids() {
        assert_eq!(parse_k_grid("2-5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_k_grid("3, 7,9").unwrap(), vec![3, 7, 9]);
        assert!(parse_k_grid("0-3").is_err());
        assert!(parse_k_grid("a").is_err());
        assert!(parse_k_grid("5-2").is_err());
    }
}
