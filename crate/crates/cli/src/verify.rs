//! Invariant suites behind `solvgeo verify`.

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use solvgeo_core::checks::{disk_volume_recursion_check, sphere_projection_check};
use solvgeo_core::distance::{distance_between, distance_lower_bound, DistanceStatus, Shooter, ShootingOptions};
use solvgeo_core::entropy::entropy_exact;
use solvgeo_core::jacobi::jacobi_volume_density;
use solvgeo_core::metric::wedge_identity_sides;
use solvgeo_core::rng::{random_unit, stream};
use solvgeo_core::{exp_map, trace, IntegratorConfig, MetricParams, Point, Tangent};

use crate::commands::{params, positive_radius, scan_curvature, seed, Context};
use crate::error::CliError;
use crate::grid::parse_count;
use crate::output::Report;
use crate::Suite;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: Value,
    /// Input that broke the invariant, when one did.
    pub witness: Option<String>,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: Value, witness: Option<String>) -> Self {
        Self { name, passed, detail, witness }
    }

    fn from_error(name: &'static str, e: impl std::fmt::Display) -> Self {
        Self::new(name, false, json!({ "error": e.to_string() }), None)
    }
}

#[derive(Debug, Clone, Serialize)]
struct VerifyOutput {
    suite: &'static str,
    a: Vec<f64>,
    seed: u64,
    rho: f64,
    samples: usize,
    checks: Vec<Check>,
    passed: bool,
}

pub fn run(
    ctx: &Context,
    suite: Option<Suite>,
    a: Option<String>,
    seed_flag: Option<u64>,
    rho: Option<f64>,
    samples: Option<usize>,
    restarts: Option<usize>,
) -> Result<Report, CliError> {
    const CMD: &str = "verify";
    let suite = ctx.config.value(CMD, "suite", suite, Suite::All)?;
    let p = params(ctx, CMD, a)?;
    let seed = seed(ctx, CMD, seed_flag)?;
    let rho = positive_radius(ctx, CMD, rho, Some(3.0))?;
    let samples = ctx.config.resolve(CMD, "samples", samples, parse_count, 1000)?;
    let restarts = ctx.config.resolve(CMD, "restarts", restarts, parse_count, 0)?;
    if samples == 0 {
        return Err(CliError::Usage("--samples must be ≥ 1".into()));
    }
    let mut checks = Vec::new();
    if matches!(suite, Suite::Core | Suite::All) {
        checks.extend(core_suite(&p, seed));
    }
    if matches!(suite, Suite::Projection | Suite::All) {
        checks.push(match sphere_projection_check(&p, rho, samples, seed) {
            Ok(r) => {
                let witness = r.witnesses.first().cloned();
                Check::new("sphere_projection", r.violations == 0, serde_json::to_value(&r)?, witness)
            }
            Err(e) => Check::from_error("sphere_projection", e),
        });
    }
    if matches!(suite, Suite::Recursion | Suite::All) {
        checks.push(match disk_volume_recursion_check(&p, rho, 12, samples, seed, restarts) {
            Ok(r) => {
                let passed = r.holds && r.below_pushforward != Some(false);
                let witness = (!passed).then(|| {
                    format!("Vol = {:.6e} vs ∫ = {:.6e} ({:.2}σ)", r.full.value, r.integral, r.margin_sigmas)
                });
                Check::new("disk_volume_recursion", passed, serde_json::to_value(&r)?, witness)
            }
            Err(e) => Check::from_error("disk_volume_recursion", e),
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    let name = match suite {
        Suite::Core => "core",
        Suite::Projection => "projection",
        Suite::Recursion => "recursion",
        Suite::All => "all",
    };
    let out = VerifyOutput { suite: name, a: p.rates().to_vec(), seed, rho, samples, checks, passed };
    Report::json(&out, if passed { 0 } else { 1 })
}

fn core_suite(p: &MetricParams, seed: u64) -> Vec<Check> {
    vec![
        curvature_check(p, seed),
        wedge_check(p, seed),
        conservation_check(p, seed),
        lower_bound_check(p, seed),
        exp_distance_check(p, seed),
        homogeneity_check(p, seed),
        half_ball_check(p, seed),
        jacobi_positivity_check(p, seed),
        entropy_symmetry_check(p),
    ]
}

fn curvature_check(p: &MetricParams, seed: u64) -> Check {
    let scan = scan_curvature(p, 10_000, seed);
    let witness = (scan.violations > 0).then(|| format!("curvature outside [{}, {}]", scan.bounds.0, scan.bounds.1));
    Check::new("curvature_bounds", scan.violations == 0, serde_json::to_value(&scan).unwrap_or(Value::Null), witness)
}

fn wedge_check(p: &MetricParams, seed: u64) -> Check {
    let mut rng = stream(seed, 1);
    let a = p.rates();
    let mut worst: f64 = 0.0;
    let mut witness = None;
    for _ in 0..10_000 {
        let x = random_unit(&mut rng, a.len());
        let y = random_unit(&mut rng, a.len());
        let Ok((lhs, rhs)) = wedge_identity_sides(a, &x, &y) else { continue };
        let scale: f64 = a.iter().zip(&x).map(|(ai, xi)| ai.abs() * xi * xi).sum::<f64>()
            * a.iter().zip(&y).map(|(ai, yi)| ai.abs() * yi * yi).sum::<f64>();
        let rel = (lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE);
        if rel > worst {
            worst = rel;
            if rel >= 1e-10 {
                witness = Some(format!("X = {x:?}, Y = {y:?}"));
            }
        }
    }
    Check::new("wedge_identity", worst < 1e-10, json!({ "max_relative_residual": worst }), witness)
}

fn conservation_check(p: &MetricParams, seed: u64) -> Check {
    let mut rng = stream(seed, 2);
    let cfg = IntegratorConfig::with_tolerance(1e-10);
    let (mut speed_drift, mut integral_drift): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let v = random_unit(&mut rng, p.dim());
        let states = match Tangent::at_origin(p, v.clone()).map_err(|e| e.to_string()).and_then(|t| {
            trace(p, &t, 20.0, 0.5, &cfg).map_err(|e| e.to_string())
        }) {
            Ok(s) => s,
            Err(e) => return Check::from_error("conservation", format!("{e} for v = {v:?}")),
        };
        for s in &states {
            speed_drift = speed_drift.max((s.speed_squared(p).sqrt() - 1.0).abs());
            for (c, c0) in s.recomputed_constants(p).iter().zip(&v) {
                integral_drift = integral_drift.max((c - c0).abs());
            }
        }
    }
    let passed = speed_drift < 1e-8 && integral_drift < 1e-8;
    Check::new("conservation", passed, json!({ "speed_drift": speed_drift, "first_integral_drift": integral_drift }), None)
}

fn random_target<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

fn lower_bound_check(p: &MetricParams, seed: u64) -> Check {
    let mut rng = stream(seed, 3);
    let opts = ShootingOptions::for_params(p);
    let shooter = Shooter::new(p);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for _ in 0..30 {
        let x = random_target(&mut rng, p.dim(), 2.0);
        let target = Point::new(x.clone()).expect("finite target");
        let d = match shooter.distance(&target, &opts) {
            Ok(d) if d.status != DistanceStatus::Failed => d.value,
            Ok(_) => continue,
            Err(e) => return Check::from_error("distance_lower_bound", e),
        };
        let lb = distance_lower_bound(p, &target).unwrap_or(f64::NAN);
        if lb - d > worst {
            worst = lb - d;
            if worst > 1e-9 {
                witness = Some(format!("target {x:?}: lower bound {lb} > distance {d}"));
            }
        }
    }
    Check::new("distance_lower_bound", worst <= 1e-9, json!({ "max_excess": worst }), witness)
}

fn exp_distance_check(p: &MetricParams, seed: u64) -> Check {
    let mut rng = stream(seed, 4);
    let cfg = IntegratorConfig::with_tolerance(1e-11);
    let opts = ShootingOptions::for_params(p);
    let shooter = Shooter::new(p);
    let exact = p.unique_geodesics();
    let mut worst: f64 = 0.0;
    let mut witness = None;
    for _ in 0..20 {
        let v = random_unit(&mut rng, p.dim());
        let t = 0.2 + 2.8 * rng.random::<f64>();
        let end = match Tangent::at_origin(p, v.clone()).map_err(|e| e.to_string()).and_then(|tv| {
            exp_map(p, &tv, t, &cfg).map_err(|e| e.to_string())
        }) {
            Ok(e) => e,
            Err(e) => return Check::from_error("exp_distance", e),
        };
        let d = match shooter.distance(&end.x, &opts) {
            Ok(d) => d.value,
            Err(e) => return Check::from_error("exp_distance", e),
        };
        let err = if exact { (d - t).abs() } else { (d - t).max(0.0) };
        if err > worst {
            worst = err;
            if err > 1e-6 {
                witness = Some(format!("v = {v:?}, t = {t}: distance {d}"));
            }
        }
    }
    Check::new("exp_distance", worst <= 1e-6, json!({ "max_error": worst, "equality_required": exact }), witness)
}

fn homogeneity_check(p: &MetricParams, seed: u64) -> Check {
    let mut rng = stream(seed, 5);
    let opts = ShootingOptions::for_params(p);
    let mut worst: f64 = 0.0;
    let mut witness = None;
    for _ in 0..10 {
        let x = Point::new(random_target(&mut rng, p.dim(), 1.0)).expect("finite point");
        let y = Point::new(random_target(&mut rng, p.dim(), 1.0)).expect("finite point");
        let (dxy, dyx) = match (distance_between(p, &x, &y, &opts), distance_between(p, &y, &x, &opts)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return Check::from_error("homogeneity", e),
        };
        if dxy.status == DistanceStatus::Failed || dyx.status == DistanceStatus::Failed {
            continue;
        }
        let diff = (dxy.value - dyx.value).abs();
        if diff > worst {
            worst = diff;
            if diff > 1e-6 {
                witness = Some(format!("x = {:?}, y = {:?}", x.coords(), y.coords()));
            }
        }
    }
    Check::new("homogeneity", worst <= 1e-6, json!({ "max_asymmetry": worst }), witness)
}

fn half_ball_check(p: &MetricParams, seed: u64) -> Check {
    if !p.rates().iter().all(|&a| a > 0.0) {
        return Check::new("half_ball", true, json!({ "skipped": "needs all rates positive" }), None);
    }
    let mut rng = stream(seed, 6);
    let cfg = IntegratorConfig::default();
    let n = p.n();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..50 {
        let mut v = random_unit(&mut rng, p.dim());
        v[n] = -v[n].abs();
        let t = 5.0 * rng.random::<f64>();
        match Tangent::at_origin(p, v).map_err(|e| e.to_string()).and_then(|tv| exp_map(p, &tv, t, &cfg).map_err(|e| e.to_string())) {
            Ok(end) => worst = worst.max(end.height()),
            Err(e) => return Check::from_error("half_ball", e),
        }
    }
    Check::new("half_ball", worst <= 1e-12, json!({ "max_height": worst }), None)
}

fn jacobi_positivity_check(p: &MetricParams, seed: u64) -> Check {
    if !p.unique_geodesics() || p.n() > 16 {
        return Check::new("jacobi_positive", true, json!({ "skipped": "conjugate points are possible" }), None);
    }
    let mut rng = stream(seed, 7);
    let cfg = IntegratorConfig::default();
    let mut smallest = f64::INFINITY;
    let mut witness = None;
    for _ in 0..10 {
        let v = random_unit(&mut rng, p.dim());
        for t in [1.0, 5.0, 10.0, 20.0] {
            match jacobi_volume_density(p, &v, t, &cfg) {
                Ok(d) => {
                    if d < smallest {
                        smallest = d;
                        if d <= 0.0 {
                            witness = Some(format!("v = {v:?}, t = {t}"));
                        }
                    }
                }
                // Vertical-ish rays may leave the overflow guard before t = 20.
                Err(solvgeo_core::Error::Integration(_)) => break,
                Err(e) => return Check::from_error("jacobi_positive", e),
            }
        }
    }
    Check::new("jacobi_positive", smallest > 0.0, json!({ "min_density": smallest }), witness)
}

fn entropy_symmetry_check(p: &MetricParams) -> Check {
    let base = entropy_exact(p);
    let negated = entropy_exact(&p.negated());
    let mut reversed = p.rates().to_vec();
    reversed.reverse();
    let permuted = MetricParams::new(reversed).map(|q| entropy_exact(&q)).unwrap_or(f64::NAN);
    let direct = p.pos_sum().max(p.neg_sum());
    let passed = base == negated && base == permuted && base == direct;
    Check::new("entropy_symmetry", passed, json!({ "entropy": base, "negated": negated, "permuted": permuted }), None)
}
