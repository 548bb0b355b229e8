//! Subcommand implementations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use solvgeo_core::entropy::{entropy_exact, fit_log_volume, sol_interpolation_entropy, EntropyFit, DEFAULT_WINDOW_FRACTION};
use solvgeo_core::hyperbolic::{hyperbolic_ball_volume, volume_bounds, BoundReport};
use solvgeo_core::metric::{curvature_bounds, sectional_curvature_from_tensor, CurvatureTensor};
use solvgeo_core::rng::{random_unit, stream};
use solvgeo_core::volume::{ball_volume_mc_with, ball_volume_pushforward, McOptions, McProgress, VolumeEstimate};
use solvgeo_core::{trace, GeodesicState, IntegratorConfig, MetricParams, Tangent};

use crate::cache::Cache;
use crate::config::Config;
use crate::error::CliError;
use crate::grid::{parse_count, parse_grid, parse_seed, parse_vector};
use crate::output::{csv_table, real, Report};
use crate::{Command, EstimatorArgs, Method, DEFAULT_SEED};

/// Slack on the curvature bounds when counting violations.
pub const CURVATURE_TOL: f64 = 1e-9;

const DEFAULT_MC_SAMPLES: usize = 100_000;
const DEFAULT_SPHERE_SAMPLES: usize = 4096;
const DEFAULT_RADIAL_STEPS: usize = 8;
const DEFAULT_RHO_GRID: &str = "4:9:0.5";

pub struct Context {
    pub config: Config,
    pub cache: Cache,
}

pub fn dispatch(ctx: &Context, command: Command) -> Result<Report, CliError> {
    match command {
        Command::EntropyExact { a } => entropy_exact_cmd(ctx, a),
        Command::CurvatureScan { a, samples, seed } => curvature_scan(ctx, a, samples, seed),
        Command::BallVolume { a, rho, est } => ball_volume(ctx, a, rho, &est),
        Command::EntropyFit { a, rho_grid, window, est } => entropy_fit_cmd(ctx, a, rho_grid, window, &est),
        Command::SolSweep { alpha, fit, rho_grid, window, est } => sol_sweep(ctx, alpha, fit, rho_grid, window, &est),
        Command::Verify { suite, a, seed, rho, samples, restarts } => {
            crate::verify::run(ctx, suite, a, seed, rho, samples, restarts)
        }
        Command::Trace { a, v, length, step, tol } => trace_cmd(ctx, a, v, length, step, tol),
    }
}

/// The rate vector from `--a` or the config file.
pub fn params(ctx: &Context, command: &str, flag: Option<String>) -> Result<MetricParams, CliError> {
    let text = flag
        .or_else(|| ctx.config.raw(command, "a").map(str::to_string))
        .ok_or_else(|| CliError::Usage("missing --a <comma-list>".into()))?;
    Ok(MetricParams::new(parse_vector(&text)?)?)
}

pub fn seed(ctx: &Context, command: &str, flag: Option<u64>) -> Result<u64, CliError> {
    ctx.config.resolve(command, "seed", flag, parse_seed, DEFAULT_SEED)
}

pub fn positive_radius(ctx: &Context, command: &str, flag: Option<f64>, default: Option<f64>) -> Result<f64, CliError> {
    let rho = match default {
        Some(d) => ctx.config.value(command, "rho", flag, d)?,
        None => ctx
            .config
            .resolve(command, "rho", flag.map(Some), |s| s.trim().parse().map(Some).map_err(|e| format!("{e}")), None)?
            .ok_or_else(|| CliError::Usage("missing --rho".into()))?,
    };
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(CliError::Usage(format!("--rho must be finite and > 0, got {rho}")));
    }
    Ok(rho)
}

fn entropy_exact_cmd(ctx: &Context, a: Option<String>) -> Result<Report, CliError> {
    let p = params(ctx, "entropy-exact", a)?;
    Report::json(&json!({ "entropy": entropy_exact(&p), "pos_sum": p.pos_sum(), "neg_sum": p.neg_sum() }), 0)
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureScan {
    pub a: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub bounds: (f64, f64),
    pub min_seen: f64,
    pub max_seen: f64,
    /// `min_seen − lower bound`.
    pub lower_gap: f64,
    /// `upper bound − max_seen`.
    pub upper_gap: f64,
    pub violations: usize,
    /// Planes skipped because the two sampled vectors were dependent.
    pub degenerate: usize,
}

/// Sectional curvature of `samples` random planes spanned by pairs of
/// uniform unit vectors.
pub fn scan_curvature(p: &MetricParams, samples: usize, seed: u64) -> CurvatureScan {
    let tensor = CurvatureTensor::new(p);
    let (lo, hi) = curvature_bounds(p);
    let dim = p.dim();
    let values: Vec<Option<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let x = random_unit(&mut rng, dim);
            let y = random_unit(&mut rng, dim);
            sectional_curvature_from_tensor(&tensor, &x, &y).ok()
        })
        .collect();
    let seen: Vec<f64> = values.iter().flatten().copied().collect();
    let min_seen = seen.iter().copied().fold(f64::INFINITY, f64::min);
    let max_seen = seen.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    CurvatureScan {
        a: p.rates().to_vec(),
        samples,
        seed,
        bounds: (lo, hi),
        min_seen,
        max_seen,
        lower_gap: min_seen - lo,
        upper_gap: hi - max_seen,
        violations: seen.iter().filter(|&&k| k < lo - CURVATURE_TOL || k > hi + CURVATURE_TOL).count(),
        degenerate: samples - seen.len(),
    }
}

fn curvature_scan(ctx: &Context, a: Option<String>, samples: Option<usize>, seed_flag: Option<u64>) -> Result<Report, CliError> {
    const CMD: &str = "curvature-scan";
    let p = params(ctx, CMD, a)?;
    let samples = ctx.config.resolve(CMD, "samples", samples, parse_count, 100_000)?;
    if samples == 0 {
        return Err(CliError::Usage("--samples must be ≥ 1".into()));
    }
    let scan = scan_curvature(&p, samples, seed(ctx, CMD, seed_flag)?);
    let status = if scan.violations > 0 { 1 } else { 0 };
    Report::json(&scan, status)
}

/// Fully resolved estimator settings.
#[derive(Debug, Clone, Copy)]
pub struct Estimator {
    pub method: Method,
    pub samples: Option<usize>,
    pub sphere_samples: Option<usize>,
    pub seed: u64,
    pub restarts: usize,
    pub radial_steps: usize,
    pub progress: bool,
}

impl Estimator {
    pub fn resolve(ctx: &Context, command: &str, est: &EstimatorArgs, default_method: Method) -> Result<Self, CliError> {
        let cfg = &ctx.config;
        let samples = cfg.resolve(command, "samples", est.samples.map(Some), |s| parse_count(s).map(Some), None)?;
        let sphere_samples =
            cfg.resolve(command, "sphere-samples", est.sphere_samples.map(Some), |s| parse_count(s).map(Some), None)?;
        if samples == Some(0) || sphere_samples == Some(0) {
            return Err(CliError::Usage("sample counts must be ≥ 1".into()));
        }
        let radial_steps = cfg.resolve(command, "radial-steps", est.radial_steps, parse_count, DEFAULT_RADIAL_STEPS)?;
        if radial_steps == 0 {
            return Err(CliError::Usage("--radial-steps must be ≥ 1".into()));
        }
        Ok(Self {
            method: cfg.value(command, "method", est.method, default_method)?,
            samples,
            sphere_samples,
            seed: seed(ctx, command, est.seed)?,
            restarts: cfg.resolve(command, "restarts", est.restarts, parse_count, 0)?,
            radial_steps,
            progress: est.progress,
        })
    }

    /// `Auto` resolved for `p`: pushforward unless the signs are mixed.
    pub fn method_for(&self, p: &MetricParams) -> Method {
        match self.method {
            Method::Auto if p.unique_geodesics() => Method::Pushforward,
            Method::Auto => Method::Mc,
            m => m,
        }
    }
}

/// A volume on the radius grid, whatever produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumePoint {
    pub rho: f64,
    pub value: f64,
    pub std_error: f64,
    pub flagged: bool,
}

/// Cached estimate of `Vol(B(0, rho))` with `method` (Monte Carlo or
/// pushforward).
pub fn estimate_volume(ctx: &Context, p: &MetricParams, rho: f64, est: &Estimator, method: Method) -> Result<VolumeEstimate, CliError> {
    match method {
        Method::Mc => {
            let samples = est.samples.unwrap_or(DEFAULT_MC_SAMPLES);
            let request = json!({
                "a": p.rates(), "rho": rho, "method": "mc_rejection",
                "samples": samples, "seed": est.seed, "restarts": est.restarts,
            });
            ctx.cache.get_or_compute("volume", &request, &p.digest(), || {
                let opts = McOptions::new(samples, est.seed, est.restarts);
                let report = |pr: McProgress| {
                    if est.progress {
                        if let Ok(line) = serde_json::to_string(&json!({ "rho": rho, "progress": pr })) {
                            eprintln!("{line}");
                        }
                    }
                };
                Ok(ball_volume_mc_with(p, rho, &opts, report)?)
            })
        }
        Method::Pushforward => {
            // Under `auto`, --samples sizes the Monte Carlo runs only.
            let explicit = if est.method == Method::Pushforward { est.samples } else { None };
            let samples = est.sphere_samples.or(explicit).unwrap_or(DEFAULT_SPHERE_SAMPLES);
            let request = json!({
                "a": p.rates(), "rho": rho, "method": "pushforward",
                "samples": samples, "seed": est.seed, "radial_steps": est.radial_steps,
            });
            ctx.cache.get_or_compute("volume", &request, &p.digest(), || {
                Ok(ball_volume_pushforward(p, rho, samples, est.radial_steps, est.seed)?)
            })
        }
        Method::ExactHyperbolic | Method::Auto => {
            Err(CliError::Usage("this command needs --method mc or --method pushforward".into()))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct BallVolumeOutput {
    estimate: VolumeEstimate,
    bounds: Option<BoundReport>,
    /// Whether `estimate ± 3σ` meets `[lower, upper]`.
    within_bounds: Option<bool>,
    flagged: bool,
}

fn ball_volume(ctx: &Context, a: Option<String>, rho: Option<f64>, est: &EstimatorArgs) -> Result<Report, CliError> {
    const CMD: &str = "ball-volume";
    let p = params(ctx, CMD, a)?;
    let rho = positive_radius(ctx, CMD, rho, None)?;
    let est = Estimator::resolve(ctx, CMD, est, Method::Mc)?;
    let estimate = estimate_volume(ctx, &p, rho, &est, est.method_for(&p))?;
    let bounds = if p.all_nonzero() { Some(volume_bounds(&p, rho)?) } else { None };
    let within_bounds = bounds.as_ref().map(|b| b.admits(estimate.value, 3.0 * estimate.std_error));
    let flagged = estimate.flagged();
    Report::json(&BallVolumeOutput { estimate, bounds, within_bounds, flagged }, if flagged { 1 } else { 0 })
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOutput {
    pub a: Vec<f64>,
    pub method: Method,
    pub rho_grid: Vec<f64>,
    pub window_fraction: f64,
    pub volumes: Vec<VolumePoint>,
    pub fit: EntropyFit,
    pub exact: f64,
    /// `|slope − exact| / exact`; absent when the exact entropy is zero.
    pub relative_gap: Option<f64>,
    pub flagged: bool,
}

/// Volumes over `grid` and the slope fit of their logarithms.
pub fn run_fit(ctx: &Context, p: &MetricParams, grid: &[f64], window: f64, est: &Estimator) -> Result<FitOutput, CliError> {
    let method = est.method_for(p);
    let volumes: Vec<VolumePoint> = match method {
        Method::ExactHyperbolic => {
            let rate = p.rates()[0];
            if rate == 0.0 || p.rates().iter().any(|&r| r != rate) {
                return Err(CliError::Usage("exact-hyperbolic needs equal nonzero rates".into()));
            }
            grid.iter()
                .map(|&rho| {
                    Ok(VolumePoint {
                        rho,
                        value: hyperbolic_ball_volume(rate.abs(), p.n(), rho)?,
                        std_error: 0.0,
                        flagged: false,
                    })
                })
                .collect::<Result<_, CliError>>()?
        }
        _ => grid
            .iter()
            .map(|&rho| {
                let e = estimate_volume(ctx, p, rho, est, method)?;
                Ok(VolumePoint { rho, value: e.value, std_error: e.std_error, flagged: e.flagged() })
            })
            .collect::<Result<_, CliError>>()?,
    };
    let points: Vec<(f64, f64)> = volumes.iter().map(|v| (v.rho, v.value)).collect();
    let fit = fit_log_volume(&points, window).map_err(|e| CliError::Failure(e.to_string()))?;
    let exact = entropy_exact(p);
    let relative_gap = (exact > 0.0).then(|| (fit.slope - exact).abs() / exact);
    let flagged = volumes.iter().any(|v| v.flagged);
    Ok(FitOutput { a: p.rates().to_vec(), method, rho_grid: grid.to_vec(), window_fraction: window, volumes, fit, exact, relative_gap, flagged })
}

fn fit_settings(
    ctx: &Context,
    command: &str,
    rho_grid: Option<String>,
    window: Option<f64>,
) -> Result<(Vec<f64>, f64), CliError> {
    let grid_text = ctx.config.value(command, "rho-grid", rho_grid, DEFAULT_RHO_GRID.to_string())?;
    let grid = parse_grid(&grid_text)?;
    if grid[0] <= 0.0 {
        return Err(CliError::Usage("radii in --rho-grid must be > 0".into()));
    }
    let window = ctx.config.value(command, "window", window, DEFAULT_WINDOW_FRACTION)?;
    if !(window > 0.0 && window <= 1.0) {
        return Err(CliError::Usage(format!("--window must lie in (0, 1], got {window}")));
    }
    Ok((grid, window))
}

fn entropy_fit_cmd(
    ctx: &Context,
    a: Option<String>,
    rho_grid: Option<String>,
    window: Option<f64>,
    est: &EstimatorArgs,
) -> Result<Report, CliError> {
    const CMD: &str = "entropy-fit";
    let p = params(ctx, CMD, a)?;
    let (grid, window) = fit_settings(ctx, CMD, rho_grid, window)?;
    let est = Estimator::resolve(ctx, CMD, est, Method::Mc)?;
    let out = run_fit(ctx, &p, &grid, window, &est)?;
    let status = if out.flagged { 1 } else { 0 };
    Report::json(&out, status)
}

fn sol_sweep(
    ctx: &Context,
    alpha: Option<String>,
    fit: bool,
    rho_grid: Option<String>,
    window: Option<f64>,
    est: &EstimatorArgs,
) -> Result<Report, CliError> {
    const CMD: &str = "sol-sweep";
    let alpha_text = alpha
        .or_else(|| ctx.config.raw(CMD, "alpha").map(str::to_string))
        .ok_or_else(|| CliError::Usage("missing --alpha lo:hi:step".into()))?;
    let alphas = parse_grid(&alpha_text)?;
    let fit = fit || ctx.config.raw(CMD, "fit").is_some_and(|v| v.trim() == "true");
    let (grid, window) = fit_settings(ctx, CMD, rho_grid, window)?;
    let est = Estimator::resolve(ctx, CMD, est, Method::Auto)?;
    let header: Vec<String> = ["alpha", "exact", "fitted", "stderr", "method", "error"].map(String::from).to_vec();
    let mut rows = Vec::with_capacity(alphas.len());
    let mut failed = false;
    for &alpha in &alphas {
        let exact = sol_interpolation_entropy(alpha);
        let mut row = vec![real(Some(alpha)), real(Some(exact))];
        if !fit {
            row.extend([String::new(), String::new(), String::new(), String::new()]);
            rows.push(row);
            continue;
        }
        let outcome = MetricParams::new(vec![1.0, if alpha == 0.0 { 0.0 } else { -alpha }])
            .map_err(CliError::from)
            .and_then(|p| run_fit(ctx, &p, &grid, window, &est));
        match outcome {
            Ok(out) => {
                let method = serde_json::to_value(out.method)?.as_str().unwrap_or_default().to_string();
                let note = if out.flagged { "more than 1% shooting failures".to_string() } else { String::new() };
                failed |= out.flagged;
                row.extend([real(Some(out.fit.slope)), real(Some(out.fit.slope_std_error)), method, note]);
            }
            Err(e) => {
                failed = true;
                row.extend([String::new(), String::new(), String::new(), e.to_string()]);
            }
        }
        rows.push(row);
    }
    Ok(Report { body: csv_table(&header, &rows)?, status: if failed { 1 } else { 0 } })
}

fn trace_cmd(
    ctx: &Context,
    a: Option<String>,
    v: Option<String>,
    length: Option<f64>,
    step: Option<f64>,
    tol: Option<f64>,
) -> Result<Report, CliError> {
    const CMD: &str = "trace";
    let p = params(ctx, CMD, a)?;
    let v_text = v
        .or_else(|| ctx.config.raw(CMD, "v").map(str::to_string))
        .ok_or_else(|| CliError::Usage("missing --v <frame components>".into()))?;
    let v = Tangent::at_origin(&p, parse_vector(&v_text)?)?;
    let length = ctx.config.value(CMD, "length", length, 10.0)?;
    let step = ctx.config.value(CMD, "step", step, 0.1)?;
    let tol = ctx.config.value(CMD, "tol", tol, 1e-10)?;
    let states = trace(&p, &v, length, step, &IntegratorConfig::with_tolerance(tol))?;
    let speed = v.frame_norm();
    let rows: Vec<Vec<String>> =
        states.iter().map(|s| s.csv_record(&p, speed).into_iter().map(|x| real(Some(x))).collect()).collect();
    Ok(Report { body: csv_table(&GeodesicState::csv_header(p.n()), &rows)?, status: 0 })
}
