//! Numerical checks of the projection property of geodesic spheres and of
//! the resulting volume recursion over the first coordinate.
//!
//! `π` drops the first horizontal coordinate, mapping `(ℝ^{N+2}, g_a)` onto
//! `(ℝ^{N+1}, g_b)` with `b = (a_2, …)`. The image of the sphere of radius `ρ`
//! is the closed ball of radius `ρ`, and integrating over spheres gives
//! `Vol_a(B(ρ)) ≥ ∫_0^ρ Vol_b(B(r)) dr`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{Shooter, ShootingOptions};
use crate::error::{Error, Result};
use crate::geodesic::{exp_map, IntegratorConfig};
use crate::hyperbolic::envelope;
use crate::params::{MetricParams, Point, Tangent};
use crate::rng::{random_unit, stream};
use crate::volume::{ball_volume_mc, ball_volume_pushforward, VolumeEstimate};

/// Slack on `d_b(π(x)) ≤ ρ` for sphere points `x`.
pub const PROJECTION_TOL: f64 = 1e-6;

/// Attempts at drawing a reduced-ball point before giving up on a sample.
const MAX_DRAWS: usize = 10_000;

/// Bisection halvings in the lift search.
const LIFT_BISECTIONS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereProjectionReport {
    pub rho: f64,
    pub samples: usize,
    /// Sphere points whose projection lies farther than `ρ + tol`.
    pub forward_violations: usize,
    /// Largest `d_b(π(x)) − ρ` seen over sphere points.
    pub forward_max_excess: f64,
    /// Reduced-ball points lifted onto the sphere.
    pub lifts: usize,
    /// Lifts where `f(0) ≤ ρ < f(s_hi)` failed or the search broke down.
    pub lift_failures: usize,
    /// Largest `ρ − f(s₀⁻)` at the located crossing.
    pub lift_max_gap: f64,
    pub violations: usize,
    /// One witness per failure kind, for reporting.
    pub witnesses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionReport {
    pub rho: f64,
    pub full: VolumeEstimate,
    /// `(r, Vol_b(B(r)))` estimates on the radial grid.
    pub reduced: Vec<(f64, VolumeEstimate)>,
    /// Trapezoid value of `∫_0^ρ Vol_b(B(r)) dr`.
    pub integral: f64,
    pub integral_std_error: f64,
    /// `Vol_a − ∫ Vol_b` in units of the combined standard error.
    pub margin_sigmas: f64,
    pub holds: bool,
    /// Pushforward volume when the rates share a sign, which is exact there.
    pub pushforward: Option<f64>,
    pub below_pushforward: Option<bool>,
}

fn check_inputs(p: &MetricParams, rho: f64) -> Result<()> {
    if p.n() < 2 {
        return Err(Error::InvalidArgument("the projection needs at least two horizontal coordinates".into()));
    }
    if !p.all_nonzero() {
        return Err(Error::ZeroRate("the projection checks"));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius must be finite and > 0, got {rho}")));
    }
    Ok(())
}

/// Whether `d(0, x) ≤ rho`, together with the length of the geodesic found
/// when it is.
fn within(shooter: &Shooter<'_>, opts: &ShootingOptions, x: Vec<f64>, rho: f64) -> Result<(bool, Option<f64>)> {
    if shooter.lower_bound(&x) > rho {
        return Ok((false, None));
    }
    let upper = shooter.upper_bound(&x);
    if upper <= rho {
        return Ok((true, Some(upper)));
    }
    let d = shooter.distance(&Point::new(x)?, opts)?;
    let inside = d.value <= rho && d.status != crate::distance::DistanceStatus::Failed;
    Ok((inside, inside.then_some(d.value)))
}

enum Lift {
    Found { gap: f64 },
    Failed(String),
}

/// Forward and surjectivity checks of `π(S(0, ρ)) = B̄_b(0, ρ)` with
/// `samples` points each.
pub fn sphere_projection_check(p: &MetricParams, rho: f64, samples: usize, seed: u64) -> Result<SphereProjectionReport> {
    check_inputs(p, rho)?;
    let reduced = p.without(0)?;
    let full_shooter = Shooter::new(p);
    let reduced_shooter = Shooter::new(&reduced);
    let cfg = IntegratorConfig::with_tolerance(1e-10);
    let reduced_opts = ShootingOptions::for_params(&reduced);
    let n = p.n();

    let forward: Vec<Result<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, 2 * i as u64);
            let v = random_unit(&mut rng, p.dim());
            let end = exp_map(p, &Tangent::at_origin(p, v)?, rho, &cfg)?;
            let projected = Point::new(end.x.coords()[1..].to_vec())?;
            let x = projected.coords();
            if reduced_shooter.upper_bound(x) <= rho {
                return Ok(reduced_shooter.upper_bound(x) - rho);
            }
            Ok(reduced_shooter.distance(&projected, &reduced_opts)?.value - rho)
        })
        .collect();

    let lift_opts = ShootingOptions::for_sampling(rho, 4, seed);
    let lifts: Vec<Lift> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, 2 * i as u64 + 1);
            // A point of the reduced ball, by rejection from its envelope.
            let mut z = None;
            for _ in 0..MAX_DRAWS {
                let h = rho * (2.0 * rng.random::<f64>() - 1.0);
                let mut y: Vec<f64> =
                    reduced.rates().iter().map(|&a| envelope(a, h, rho) * (2.0 * rng.random::<f64>() - 1.0)).collect();
                y.push(h);
                match within(&reduced_shooter, &reduced_opts, y.clone(), rho) {
                    Ok((true, _)) => {
                        z = Some(y);
                        break;
                    }
                    Ok((false, _)) => {}
                    Err(e) => return Lift::Failed(format!("reduced distance failed: {e}")),
                }
            }
            let Some(z) = z else {
                return Lift::Failed("no reduced-ball point drawn".into());
            };
            let lifted = |s: f64| {
                let mut x = Vec::with_capacity(n + 1);
                x.push(s);
                x.extend_from_slice(&z);
                x
            };
            // Beyond the envelope of the first coordinate the distance
            // exceeds ρ, so f(s_hi) > ρ is expected.
            let mut hi = 1.0001 * envelope(p.rates()[0], z[n - 1], rho) + 1e-9;
            let mut lo = 0.0;
            let mut gap = match within(&full_shooter, &lift_opts, lifted(lo), rho) {
                Ok((true, Some(d))) => rho - d,
                Ok(_) => return Lift::Failed(format!("f(0) > ρ at {z:?}")),
                Err(e) => return Lift::Failed(format!("distance failed at {z:?}: {e}")),
            };
            match within(&full_shooter, &lift_opts, lifted(hi), rho) {
                Ok((false, _)) => {}
                Ok((true, _)) => return Lift::Failed(format!("f(s_hi) ≤ ρ at {z:?}, s_hi = {hi}")),
                Err(e) => return Lift::Failed(format!("distance failed at {z:?}: {e}")),
            }
            for _ in 0..LIFT_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                match within(&full_shooter, &lift_opts, lifted(mid), rho) {
                    Ok((true, d)) => {
                        lo = mid;
                        gap = d.map_or(gap, |d| rho - d);
                    }
                    Ok((false, _)) => hi = mid,
                    Err(e) => return Lift::Failed(format!("distance failed at s = {mid}: {e}")),
                }
            }
            Lift::Found { gap }
        })
        .collect();

    let mut report = SphereProjectionReport {
        rho,
        samples,
        forward_violations: 0,
        forward_max_excess: f64::NEG_INFINITY,
        lifts: 0,
        lift_failures: 0,
        lift_max_gap: 0.0,
        violations: 0,
        witnesses: Vec::new(),
    };
    for (i, r) in forward.into_iter().enumerate() {
        let excess = r?;
        report.forward_max_excess = report.forward_max_excess.max(excess);
        if excess > PROJECTION_TOL {
            report.forward_violations += 1;
            if report.forward_violations == 1 {
                report.witnesses.push(format!("forward sample {i}: projected distance exceeds ρ by {excess:.3e}"));
            }
        }
    }
    for lift in lifts {
        match lift {
            Lift::Found { gap } => {
                report.lifts += 1;
                report.lift_max_gap = report.lift_max_gap.max(gap);
            }
            Lift::Failed(msg) => {
                report.lift_failures += 1;
                if report.lift_failures == 1 {
                    report.witnesses.push(msg);
                }
            }
        }
    }
    report.violations = report.forward_violations + report.lift_failures;
    Ok(report)
}

/// Compares `Vol_a(B(ρ))` with the trapezoid integral of `Vol_b(B(r))` over
/// `grid` equal subintervals of `[0, ρ]`, all by Monte Carlo with `samples`
/// draws each.
pub fn disk_volume_recursion_check(
    p: &MetricParams,
    rho: f64,
    grid: usize,
    samples: usize,
    seed: u64,
    restarts: usize,
) -> Result<RecursionReport> {
    check_inputs(p, rho)?;
    if grid == 0 {
        return Err(Error::InvalidArgument("grid must have at least one interval".into()));
    }
    let reduced = p.without(0)?;
    let full = ball_volume_mc(p, rho, samples, seed, restarts)?;
    let step = rho / grid as f64;
    let mut estimates = Vec::with_capacity(grid);
    let mut integral = 0.0;
    let mut variance = 0.0;
    for k in 1..=grid {
        let r = step * k as f64;
        let est = ball_volume_mc(&reduced, r, samples, seed.wrapping_add(k as u64), restarts)?;
        // Vol_b(B(0)) = 0 contributes nothing at the left end.
        let w = if k == grid { 0.5 * step } else { step };
        integral += w * est.value;
        variance += (w * est.std_error).powi(2);
        estimates.push((r, est));
    }
    let combined = (full.std_error.powi(2) + variance).sqrt();
    let margin = full.value - integral;
    let margin_sigmas = if combined > 0.0 { margin / combined } else { margin.signum() * f64::INFINITY };
    let holds = margin + 3.0 * combined >= 0.0;
    let (pushforward, below_pushforward) = if p.unique_geodesics() {
        let pf = ball_volume_pushforward(p, rho, 4096, 8, seed)?.value;
        (Some(pf), Some(full.value - 3.0 * full.std_error <= pf))
    } else {
        (None, None)
    };
    Ok(RecursionReport {
        rho,
        full,
        reduced: estimates,
        integral,
        integral_std_error: variance.sqrt(),
        margin_sigmas,
        holds,
        pushforward,
        below_pushforward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_directions_project_onto_the_sphere() {
        let p = MetricParams::from_slice(&[1.0, -1.0]).unwrap();
        let v = vec![0.0, 0.6, 0.8];
        let rho = 2.0;
        let end = exp_map(&p, &Tangent::at_origin(&p, v).unwrap(), rho, &IntegratorConfig::default()).unwrap();
        let reduced = p.without(0).unwrap();
        let y = end.x.coords()[1..].to_vec();
        let d = crate::distance::distance_lower_bound(&reduced, &Point::new(y).unwrap()).unwrap();
        assert!((d - rho).abs() < 1e-8, "{d}");
    }

    #[test]
    fn small_projection_run_is_clean() {
        let p = MetricParams::from_slice(&[1.0, -1.0]).unwrap();
        let report = sphere_projection_check(&p, 1.5, 20, 5).unwrap();
        assert_eq!(report.violations, 0, "{report:?}");
        assert_eq!(report.lifts, 20);
    }

    #[test]
    fn rejects_planar_input() {
        let p = MetricParams::from_slice(&[1.0]).unwrap();
        assert!(sphere_projection_check(&p, 1.0, 1, 0).is_err());
        let p = MetricParams::from_slice(&[1.0, 0.0]).unwrap();
        assert!(disk_volume_recursion_check(&p, 1.0, 4, 10, 0, 0).is_err());
    }
}
