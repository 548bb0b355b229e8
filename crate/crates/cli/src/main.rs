//! `solvgeo`: batch experiments on the left-invariant metrics
//! `g_a = Σ e^{−2a_i x_{N+1}} dx_i² + dx_{N+1}²`.
//!
//! Exit status: 0 on success, 1 on an estimation or invariant failure, 2 on
//! a usage error.

mod cache;
mod commands;
mod config;
mod error;
mod grid;
mod output;
mod verify;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cache::Cache;
use crate::config::Config;
use crate::error::CliError;
use crate::grid::{parse_count, parse_seed};

/// Seed used when neither a flag nor the config file sets one.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

#[derive(Debug, Parser)]
#[command(name = "solvgeo", version, about = "Geodesics, ball volumes and volume entropy of solvable Lie group metrics")]
struct Cli {
    /// INI-style config file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cache file (JSONL); defaults to $SOLVGEO_CACHE or ./solvgeo-cache.jsonl.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Neither read nor write the cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Worker threads for the estimators; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the result here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mc,
    Pushforward,
    /// Closed-form hyperbolic volumes; needs all rates equal.
    ExactHyperbolic,
    /// Pushforward without mixed signs (exact there), Monte Carlo otherwise.
    Auto,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Method as ValueEnum>::from_str(s.trim(), true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Core,
    Projection,
    Recursion,
    All,
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Suite as ValueEnum>::from_str(s.trim(), true)
    }
}

/// Estimator flags shared by the volume commands.
#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Monte Carlo draws, or sphere directions for pushforward (accepts 2e5).
    #[arg(long, value_parser = parse_count)]
    pub samples: Option<usize>,
    /// Sphere directions for pushforward; overrides --samples there.
    #[arg(long, value_parser = parse_count)]
    pub sphere_samples: Option<usize>,
    #[arg(long, value_parser = parse_seed)]
    pub seed: Option<u64>,
    /// Quasi-random shooting restarts per Monte Carlo sample.
    #[arg(long, value_parser = parse_count)]
    pub restarts: Option<usize>,
    /// Pushforward only: the integrator step is capped at ρ / radial-steps.
    #[arg(long, value_parser = parse_count)]
    pub radial_steps: Option<usize>,
    /// Stream Monte Carlo progress as JSON lines on standard error.
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form volume entropy max(Σ positive a_i, Σ |negative a_i|).
    EntropyExact {
        #[arg(long = "a", allow_hyphen_values = true)]
        a: Option<String>,
    },
    /// Sample sectional curvatures of random 2-planes against the bounds.
    CurvatureScan {
        #[arg(long = "a", allow_hyphen_values = true)]
        a: Option<String>,
        #[arg(long, value_parser = parse_count)]
        samples: Option<usize>,
        #[arg(long, value_parser = parse_seed)]
        seed: Option<u64>,
    },
    /// Estimate Vol(B(0, ρ)) and compare it with the closed-form bounds.
    BallVolume {
        #[arg(long = "a", allow_hyphen_values = true)]
        a: Option<String>,
        #[arg(long)]
        rho: Option<f64>,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Fit the slope of log Vol(B(0, ρ)) over a radius grid.
    EntropyFit {
        #[arg(long = "a", allow_hyphen_values = true)]
        a: Option<String>,
        /// lo:hi:step or a comma list.
        #[arg(long)]
        rho_grid: Option<String>,
        /// Share of the upper ρ range used by the fit.
        #[arg(long)]
        window: Option<f64>,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Entropy along a = (1, −α) as CSV, optionally with fitted slopes.
    SolSweep {
        /// lo:hi:step or a comma list.
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
        /// Also estimate volumes and fit slopes.
        #[arg(long)]
        fit: bool,
        #[arg(long)]
        rho_grid: Option<String>,
        #[arg(long)]
        window: Option<f64>,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Machine-readable pass/fail of invariant suites.
    Verify {
        #[arg(long, value_enum)]
        suite: Option<Suite>,
        #[arg(long = "a", allow_hyphen_values = true)]
        a: Option<String>,
        #[arg(long, value_parser = parse_seed)]
        seed: Option<u64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, value_parser = parse_count)]
        samples: Option<usize>,
        #[arg(long, value_parser = parse_count)]
        restarts: Option<usize>,
    },
    /// Sample a geodesic from the origin as CSV rows.
    Trace {
        #[arg(long = "a", allow_hyphen_values = true)]
        a: Option<String>,
        /// Initial velocity in frame components.
        #[arg(long, allow_hyphen_values = true)]
        v: Option<String>,
        #[arg(long)]
        length: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<output::Report, CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Failure(format!("thread pool: {e}")))?;
    }
    let config = Config::load(cli.config.as_deref())?;
    let cache = if cli.no_cache {
        Cache::disabled()
    } else {
        cli.cache.map(Cache::at).unwrap_or_else(Cache::from_env)
    };
    let ctx = commands::Context { config, cache };
    commands::dispatch(&ctx, cli.command)
}

fn main() {
    let cli = Cli::parse();
    let target = cli.output.clone();
    let code = match run(cli) {
        Ok(report) => {
            let written = match &target {
                Some(path) => std::fs::write(path, report.body.as_bytes()),
                None => std::io::stdout().write_all(report.body.as_bytes()),
            };
            match written {
                Ok(()) => report.status,
                Err(e) => {
                    eprintln!("solvgeo: cannot write output: {e}");
                    1
                }
            }
        }
        Err(e) => {
            eprintln!("solvgeo: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
