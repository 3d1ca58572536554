//! The `semple` command-line front end.

mod commands;
mod config;
mod manifest;

pub use commands::{
    cmd_bic_scan, cmd_compare, cmd_diagnose, cmd_fit, cmd_fit_exact_ou, cmd_simulate, parse_k_grid,
    write_bic_csv,
};
pub use config::{
    schema_problems, Config, DiagnosticsConfig, ModelConfig, ModelKind, MrnaSetup, TimeGrid,
    TruthConfig,
};
pub use manifest::{RoundEntry, RunManifest};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::engine::Variant;
use crate::error::{Error, Result};

/// Environment variable that supplies the output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "SEMPLE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "semple",
    version,
    about = "Surrogate-likelihood inference for stochastic differential mixed-effects models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: PathBuf,
    /// Master seed; overrides the seed of the section the command uses.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for one per core; overrides `threads` in the config.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from the config's `truth` section.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run SeMPLE on a dataset.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// three_step or two_step; overrides `run.variant`.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Exact-likelihood reference sampler for the OU model.
    FitExactOu {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// BIC over component counts on prior-predictive data.
    BicScan {
        #[command(flatten)]
        common: Common,
        /// `2-14` or `2,4,8`; defaults to `run.k_grid`, then 2-14.
        #[arg(long)]
        k_grid: Option<String>,
    },
    /// ESS and posterior-predictive reports for a samples file.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        /// Seconds spent producing the samples; read from a fit manifest next to them if absent.
        #[arg(long)]
        wall_time: Option<f64>,
    },
    /// Per-parameter moments and Wasserstein-1 distances between two samples files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, env = OUT_DIR_ENV)]
        out: PathBuf,
    },
}

fn prepare(common: &Common) -> Result<Config> {
    let mut cfg = Config::load(&common.config).map_err(commands::at(&common.config))?;
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn missing_section(name: &str) -> Error {
    Error::Schema(format!("missing key `{name}` required by this command"))
}

/// Execute one parsed command and return the manifest it wrote.
pub fn run(cli: Cli) -> Result<PathBuf> {
    match cli.command {
        Command::Simulate { common } => {
            let mut cfg = prepare(&common)?;
            let truth = cfg.truth.as_mut().ok_or_else(|| missing_section("truth"))?;
            if let Some(s) = common.seed {
                truth.seed = s;
            }
            in_pool(cfg.threads, || cmd_simulate(&cfg, &common.out))
        }
        Command::Fit {
            common,
            data,
            variant,
        } => {
            let mut cfg = prepare(&common)?;
            if let Some(s) = common.seed {
                cfg.run.seed = s;
            }
            if let Some(v) = variant {
                cfg.run.variant = v.parse::<Variant>()?;
            }
            in_pool(cfg.threads, || cmd_fit(&cfg, &data, &common.out))
        }
        Command::FitExactOu { common, data } => {
            let mut cfg = prepare(&common)?;
            let exact = cfg.exact.as_mut().ok_or_else(|| missing_section("exact"))?;
            if let Some(s) = common.seed {
                exact.seed = s;
            }
            in_pool(cfg.threads, || cmd_fit_exact_ou(&cfg, &data, &common.out))
        }
        Command::BicScan { common, k_grid } => {
            let mut cfg = prepare(&common)?;
            if let Some(s) = common.seed {
                cfg.run.seed = s;
            }
            let grid = match k_grid {
                Some(g) => parse_k_grid(&g)?,
                None if !cfg.run.k_grid.is_empty() => cfg.run.k_grid.clone(),
                None => (2..=14).collect(),
            };
            in_pool(cfg.threads, || cmd_bic_scan(&cfg, &grid, &common.out))
        }
        Command::Diagnose {
            common,
            data,
            samples,
            wall_time,
        } => {
            let mut cfg = prepare(&common)?;
            if let Some(s) = common.seed {
                cfg.diagnostics.seed = s;
            }
            in_pool(cfg.threads, || {
                cmd_diagnose(&cfg, &samples, &data, wall_time, &common.out)
            })
        }
        Command::Compare { a, b, out } => cmd_compare(&a, &b, &out),
    }
}

/// One-line JSON error report, as printed on stderr.
pub fn error_report(e: &Error) -> String {
    serde_json::json!({ "error": { "category": e.category(), "exit_code": e.exit_code(), "message": e.to_string() } }).to_string()
}

/// Parse `args`, run, and return the process exit code. Prints the manifest path on success.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            0
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("{}", error_report(&e));
            e.exit_code()
        }
    }
}

pub(crate) fn relative(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).display().to_string()
}
