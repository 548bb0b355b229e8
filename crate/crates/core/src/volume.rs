//! Geodesic-ball volume estimators.
//!
//! `ball_volume_mc` integrates the indicator of `d(0, ·) ≤ ρ` against the
//! volume density `e^{−(Σa) x_{N+1}}` over the envelope region
//! `{|x_{N+1}| ≤ ρ, |x_i| ≤ E_i(x_{N+1})}` that contains the ball. Heights are
//! drawn from a tabulated proposal proportional to the slice volume
//! `e^{−(Σa)h} Π 2E_i(h)`, horizontal coordinates uniformly in the slice box,
//! and each sample carries the importance weight `slice volume / proposal
//! density`.
//!
//! Membership is settled by the cheapest test that decides it: the lower
//! bound rejects, the broken-path upper bound accepts, and only the band in
//! between goes to the shooting solver. Samples whose upper bound exceeds
//! `ρ + near_band` are almost always outside; they are shot with probability
//! `far_shot_probability` and reweighted by its inverse, which keeps the
//! estimator unbiased.
//!
//! `ball_volume_pushforward` integrates the Jacobi density over the tangent
//! ball, which is the volume when the exponential map is injective and an
//! over-count with multiplicity otherwise.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{DistanceStatus, Shooter, ShootingOptions};
use crate::error::{Error, Result};
use crate::geodesic::IntegratorConfig;
use crate::hyperbolic::{envelope, sphere_volume};
use crate::jacobi::radial_density_integral;
use crate::metric::CurvatureTensor;
use crate::ode::Dopri5;
use crate::params::{MetricParams, Point};
use crate::rng::{sphere_points, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMethod {
    McRejection,
    Pushforward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    /// Standard error of the mean importance weight; zero for pushforward.
    pub std_error: f64,
    pub method: VolumeMethod,
    pub samples: usize,
    pub rho: f64,
    pub seed: u64,
    pub params_hash: String,
    pub diagnostics: VolumeDiagnostics,
}

impl VolumeEstimate {
    /// More than 1% of the shooting calls failed.
    pub fn flagged(&self) -> bool {
        self.diagnostics.flagged
    }
}

/// Bookkeeping of how samples were decided.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VolumeDiagnostics {
    /// Samples rejected by the distance lower bound.
    pub rejected_by_lower_bound: usize,
    /// Samples accepted by the broken-path upper bound.
    pub accepted_by_upper_bound: usize,
    /// Samples handed to the shooting solver.
    pub shot: usize,
    /// Shot samples whose distance is only an upper bound.
    pub upper_bound_only: usize,
    /// Shot samples with no converged geodesic; counted as outside.
    pub failures: usize,
    /// Directions whose Jacobi determinant changed sign before `ρ`.
    pub conjugate_crossings: usize,
    pub flagged: bool,
}

/// Tuning of the Monte Carlo estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
    /// Quasi-random shooting restarts after the heuristic starts.
    pub restarts: usize,
    /// Samples with `ρ < upper bound ≤ ρ + near_band` are always shot.
    pub near_band: f64,
    /// Shooting probability for samples beyond the near band.
    pub far_shot_probability: f64,
    /// Number of cells in the tabulated height proposal.
    pub height_cells: usize,
}

impl McOptions {
    pub fn new(samples: usize, seed: u64, restarts: usize) -> Self {
        Self { samples, seed, restarts, near_band: 0.1, far_shot_probability: 0.05, height_cells: 1024 }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidArgument("samples must be ≥ 1".into()));
        }
        if !(self.near_band >= 0.0) {
            return Err(Error::InvalidArgument("near_band must be ≥ 0".into()));
        }
        if !(self.far_shot_probability > 0.0 && self.far_shot_probability <= 1.0) {
            return Err(Error::InvalidArgument("far_shot_probability must lie in (0, 1]".into()));
        }
        if self.height_cells == 0 {
            return Err(Error::InvalidArgument("height_cells must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Progress of a running Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McProgress {
    pub done: usize,
    pub total: usize,
    pub running_value: f64,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("radius must be finite and > 0, got {rho}")))
    }
}

/// Piecewise-constant density on `[−ρ, ρ]` following the log slice volume.
struct HeightProposal {
    lo: f64,
    width: f64,
    /// Log of the unnormalised density per cell.
    log_density: Vec<f64>,
    cdf: Vec<f64>,
    /// Log of the total mass `Σ density · width`.
    log_mass: f64,
}

fn log_slice_volume(p: &MetricParams, rho: f64, h: f64) -> f64 {
    let mut out = -p.trace() * h;
    for &a in p.rates() {
        out += (2.0 * envelope(a, h, rho)).ln();
    }
    out
}

impl HeightProposal {
    fn new(p: &MetricParams, rho: f64, cells: usize) -> Self {
        let lo = -rho;
        let width = 2.0 * rho / cells as f64;
        let log_density: Vec<f64> =
            (0..cells).map(|c| log_slice_volume(p, rho, lo + (c as f64 + 0.5) * width)).collect();
        let top = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut cdf = Vec::with_capacity(cells);
        let mut acc = 0.0;
        for v in &log_density {
            acc += (v - top).exp();
            cdf.push(acc);
        }
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        let log_mass = top + (total * width).ln();
        Self { lo, width, log_density, cdf, log_mass }
    }

    /// A height and the log of its proposal density.
    fn sample<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let u: f64 = rng.random();
        let cell = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        let h = self.lo + (cell as f64 + rng.random::<f64>()) * self.width;
        (h, self.log_density[cell] - self.log_mass)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct SampleOutcome {
    weight: f64,
    rejected: bool,
    accepted_cheaply: bool,
    shot: bool,
    upper_only: bool,
    failed: bool,
}

/// Quasi-random restarts granted to a shot whose first attempt failed.
const FALLBACK_RESTARTS: usize = 8;

/// Monte Carlo estimate of `Vol(B(0, ρ))` with `samples` draws.
pub fn ball_volume_mc(p: &MetricParams, rho: f64, samples: usize, seed: u64, restarts: usize) -> Result<VolumeEstimate> {
    ball_volume_mc_with(p, rho, &McOptions::new(samples, seed, restarts), |_| {})
}

/// Monte Carlo estimate with explicit options; `progress` is called after
/// every block of samples. The result depends only on the options, never on
/// the number of worker threads.
pub fn ball_volume_mc_with(
    p: &MetricParams,
    rho: f64,
    opts: &McOptions,
    mut progress: impl FnMut(McProgress),
) -> Result<VolumeEstimate> {
    check_rho(rho)?;
    opts.validate()?;
    let proposal = HeightProposal::new(p, rho, opts.height_cells);
    let shooter = Shooter::new(p);
    let shooting = ShootingOptions::for_sampling(rho, opts.restarts, opts.seed);
    let fallback = ShootingOptions::for_sampling(rho, opts.restarts.max(FALLBACK_RESTARTS), opts.seed);
    let n = p.n();

    let one = |index: usize| -> SampleOutcome {
        let mut rng = stream(opts.seed, index as u64);
        let (h, log_proposal) = proposal.sample(&mut rng);
        let mut x = Vec::with_capacity(n + 1);
        for &a in p.rates() {
            let half = envelope(a, h, rho);
            x.push(half * (2.0 * rng.random::<f64>() - 1.0));
        }
        x.push(h);
        let roulette: f64 = rng.random();
        let weight = (log_slice_volume(p, rho, h) - log_proposal).exp();
        let mut out = SampleOutcome::default();
        if shooter.lower_bound(&x) > rho {
            out.rejected = true;
            return out;
        }
        let upper = shooter.upper_bound(&x);
        if upper <= rho {
            out.accepted_cheaply = true;
            out.weight = weight;
            return out;
        }
        let chance = if upper <= rho + opts.near_band { 1.0 } else { opts.far_shot_probability };
        if roulette >= chance {
            return out;
        }
        out.shot = true;
        let target = match Point::new(x) {
            Ok(pt) => pt,
            Err(_) => {
                out.failed = true;
                return out;
            }
        };
        let attempt = match shooter.distance(&target, &shooting) {
            Ok(d) if d.status != DistanceStatus::Failed => Ok(d),
            _ if fallback.restarts > shooting.restarts => shooter.distance(&target, &fallback),
            first => first,
        };
        match attempt {
            Ok(d) => match d.status {
                DistanceStatus::Failed => out.failed = true,
                status => {
                    out.upper_only = status == DistanceStatus::UpperBoundOnly;
                    if d.value <= rho {
                        out.weight = weight / chance;
                    }
                }
            },
            Err(_) => out.failed = true,
        }
        out
    };

    const BLOCK: usize = 8192;
    let mut outcomes: Vec<SampleOutcome> = Vec::with_capacity(opts.samples);
    let mut running = 0.0;
    let mut start = 0;
    while start < opts.samples {
        let end = (start + BLOCK).min(opts.samples);
        let block: Vec<SampleOutcome> = (start..end).into_par_iter().map(one).collect();
        running += block.iter().map(|o| o.weight).sum::<f64>();
        outcomes.extend(block);
        progress(McProgress { done: end, total: opts.samples, running_value: running / end as f64 });
        start = end;
    }

    let count = opts.samples as f64;
    let mean = outcomes.iter().map(|o| o.weight).sum::<f64>() / count;
    let variance = if opts.samples > 1 {
        outcomes.iter().map(|o| (o.weight - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let mut diagnostics = VolumeDiagnostics::default();
    for o in &outcomes {
        diagnostics.rejected_by_lower_bound += usize::from(o.rejected);
        diagnostics.accepted_by_upper_bound += usize::from(o.accepted_cheaply);
        diagnostics.shot += usize::from(o.shot);
        diagnostics.upper_bound_only += usize::from(o.upper_only);
        diagnostics.failures += usize::from(o.failed);
    }
    diagnostics.flagged = diagnostics.failures * 100 > diagnostics.shot;
    Ok(VolumeEstimate {
        value: mean,
        std_error: (variance / count).sqrt(),
        method: VolumeMethod::McRejection,
        samples: opts.samples,
        rho,
        seed: opts.seed,
        params_hash: p.digest(),
        diagnostics,
    })
}

/// `∫_{S^N} ∫_0^ρ density(v, t) dt dσ(v)` over `sphere_samples` quasi-random
/// directions; `radial_steps` caps the integrator step at `ρ / radial_steps`.
/// The density is clamped to zero beyond a conjugate point.
pub fn ball_volume_pushforward(
    p: &MetricParams,
    rho: f64,
    sphere_samples: usize,
    radial_steps: usize,
    seed: u64,
) -> Result<VolumeEstimate> {
    check_rho(rho)?;
    if sphere_samples == 0 || radial_steps == 0 {
        return Err(Error::InvalidArgument("sphere_samples and radial_steps must be ≥ 1".into()));
    }
    let tensor = CurvatureTensor::new(p);
    let cfg = IntegratorConfig { max_step: rho / radial_steps as f64, ..IntegratorConfig::default() };
    let directions = sphere_points(p.dim(), sphere_samples, seed);
    let block = 2 + 2 * p.n() * p.dim() + 1;
    let results: Vec<Result<(f64, Option<f64>)>> = directions
        .par_iter()
        .map_init(|| Dopri5::new(block), |ws, v| radial_density_integral(p, &tensor, v, rho, &cfg, Some(ws)))
        .collect();
    let mut total = 0.0;
    let mut diagnostics = VolumeDiagnostics::default();
    for r in results {
        let (integral, crossing) = r?;
        total += integral;
        diagnostics.conjugate_crossings += usize::from(crossing.is_some());
    }
    Ok(VolumeEstimate {
        value: sphere_volume(p.n()) * total / sphere_samples as f64,
        std_error: 0.0,
        method: VolumeMethod::Pushforward,
        samples: sphere_samples,
        rho,
        seed,
        params_hash: p.digest(),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: &[f64]) -> MetricParams {
        MetricParams::from_slice(a).unwrap()
    }

    #[test]
    fn proposal_mass_matches_quadrature() {
        let p = params(&[1.0, -1.0]);
        let rho = 3.0;
        let prop = HeightProposal::new(&p, rho, 4096);
        let (mass, _) =
            crate::quadrature::integrate(|h| log_slice_volume(&p, rho, h).exp(), -rho, rho, 1e-10, 0.0);
        assert!((prop.log_mass.exp() / mass - 1.0).abs() < 1e-3);
    }

    #[test]
    fn hyperbolic_plane_mc_is_exact_in_mean() {
        // In dimension two the envelope region is the ball itself.
        let p = params(&[1.0]);
        let est = ball_volume_mc(&p, 2.0, 4000, 3, 0).unwrap();
        let exact = 4.0 * std::f64::consts::PI * 1.0f64.sinh().powi(2);
        assert!((est.value - exact).abs() < 3.0 * est.std_error + 1e-9, "{est:?}");
        assert_eq!(est.diagnostics.shot, 0);
    }

    #[test]
    fn pushforward_hyperbolic_plane() {
        let p = params(&[1.0]);
        let est = ball_volume_pushforward(&p, 2.0, 256, 8, 0).unwrap();
        let exact = 4.0 * std::f64::consts::PI * 1.0f64.sinh().powi(2);
        assert!((est.value / exact - 1.0).abs() < 1e-6, "{} vs {exact}", est.value);
    }

    #[test]
    fn mc_is_deterministic() {
        let p = params(&[1.0, -1.0]);
        let a = ball_volume_mc(&p, 1.5, 500, 9, 1).unwrap();
        let b = ball_volume_mc(&p, 1.5, 500, 9, 1).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn rejects_bad_radius() {
        let p = params(&[1.0]);
        assert!(ball_volume_mc(&p, 0.0, 10, 0, 0).is_err());
        assert!(ball_volume_pushforward(&p, -1.0, 10, 10, 0).is_err());
    }
}
