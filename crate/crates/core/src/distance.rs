//! Distance from the origin by geodesic shooting, with cheap closed-form
//! lower and upper bounds.
//!
//! Shooting unknowns are the initial velocity `w = (C, ẋ_{N+1}(0))`; because
//! the geodesic equations are homogeneous, `exp(w)` is the state at `s = 1`
//! and `|w|` is the length of the geodesic. The Jacobian of the endpoint with
//! respect to `w` comes from the variational equations integrated alongside.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, IntegrationError, Result};
use crate::geodesic::{IntegratorConfig, EXPONENT_GUARD};
use crate::hyperbolic::log_model_distance;
use crate::ode::{Control, Dopri5, OdeSystem};
use crate::params::{MetricParams, Point, Tangent};
use crate::rng::sphere_points;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceStatus {
    /// The value is the distance (unique geodesic, or certified by the lower
    /// bound).
    Converged,
    /// Smallest length among the geodesics found; a shorter one may exist.
    UpperBoundOnly,
    /// No start converged.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub value: f64,
    /// Unit initial direction of the realising geodesic.
    pub direction: Tangent,
    /// Endpoint error in the metric at the target.
    pub residual: f64,
    pub status: DistanceStatus,
    /// Number of starts tried.
    pub restarts_used: usize,
    /// Endpoint integrations performed across all starts.
    pub evaluations: usize,
}

/// Knobs of the shooting solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    pub integrator: IntegratorConfig,
    /// Convergence threshold on the endpoint error.
    pub residual_tol: f64,
    pub max_newton_iters: usize,
    /// Quasi-random starts tried after the heuristic ones.
    pub restarts: usize,
    pub seed: u64,
    /// Stop at the first converged geodesic of at most this length.
    pub accept_below: Option<f64>,
}

impl ShootingOptions {
    /// Defaults: one quasi-random restart when geodesics are unique, 32
    /// otherwise.
    pub fn for_params(p: &MetricParams) -> Self {
        Self {
            integrator: IntegratorConfig::with_tolerance(1e-11),
            residual_tol: 1e-9,
            max_newton_iters: 40,
            restarts: if p.unique_geodesics() { 1 } else { 32 },
            seed: 0xC0FFEE,
            accept_below: None,
        }
    }

    /// Membership test `d ≤ rho` inside volume sampling: looser tolerances,
    /// and the search stops at the first geodesic of length at most `rho`.
    pub fn for_sampling(rho: f64, restarts: usize, seed: u64) -> Self {
        Self {
            integrator: IntegratorConfig::with_tolerance(1e-8),
            residual_tol: 1e-6,
            max_newton_iters: 25,
            restarts,
            seed,
            accept_below: Some(rho),
        }
    }
}

/// Rates grouped by value; each group spans a totally geodesic copy of a
/// constant-curvature space together with the vertical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RateGroups {
    pub groups: Vec<(f64, Vec<usize>)>,
}

impl RateGroups {
    pub fn new(p: &MetricParams) -> Self {
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for (i, &a) in p.rates().iter().enumerate() {
            match groups.iter_mut().find(|(r, _)| *r == a) {
                Some((_, members)) => members.push(i),
                None => groups.push((a, vec![i])),
            }
        }
        Self { groups }
    }

    /// Euclidean norm of the target's horizontal coordinates in each group.
    pub fn gaps(&self, x: &[f64]) -> Vec<f64> {
        self.groups.iter().map(|(_, m)| m.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt()).collect()
    }
}

/// Largest of `|x_{N+1}|` and the exact distances of the projections
/// `(x_G, x_{N+1})` onto every group `G` of equal rates. Projections are
/// 1-Lipschitz, so this never exceeds the distance.
pub fn distance_lower_bound(p: &MetricParams, target: &Point) -> Result<f64> {
    target.check(p)?;
    Ok(lower_bound_with(&RateGroups::new(p), target.coords()))
}

pub(crate) fn lower_bound_with(groups: &RateGroups, x: &[f64]) -> f64 {
    let h = *x.last().expect("points are never empty");
    let gaps = groups.gaps(x);
    groups
        .groups
        .iter()
        .zip(gaps)
        .map(|((rate, _), gap)| log_model_distance(*rate, gap, 0.0, h))
        .fold(h.abs(), f64::max)
}

/// Length of the best broken path that moves one group of coordinates at a
/// time, each leg being an exact geodesic of its constant-curvature slice
/// between optimised intermediate heights.
pub fn distance_upper_bound(p: &MetricParams, target: &Point) -> Result<f64> {
    target.check(p)?;
    Ok(upper_bound_with(&RateGroups::new(p), target.coords()).0)
}

/// Broken-path length, the group order used and the intermediate heights.
pub(crate) fn upper_bound_with(groups: &RateGroups, x: &[f64]) -> (f64, Vec<usize>, Vec<f64>) {
    let h = *x.last().expect("points are never empty");
    let gaps = groups.gaps(x);
    let legs: Vec<(f64, f64)> =
        groups.groups.iter().zip(&gaps).filter(|(_, g)| **g > 0.0).map(|((r, _), g)| (*r, *g)).collect();
    let index: Vec<usize> = (0..groups.groups.len()).filter(|&k| gaps[k] > 0.0).collect();
    match legs.len() {
        0 => return (h.abs(), vec![], vec![]),
        1 => return (log_model_distance(legs[0].0, legs[0].1, 0.0, h), index, vec![]),
        _ => {}
    }
    let mut best = (f64::INFINITY, vec![], vec![]);
    for order in candidate_orders(legs.len()) {
        let ordered: Vec<(f64, f64)> = order.iter().map(|&k| legs[k]).collect();
        let (len, heights) = optimise_heights(&ordered, h);
        if len < best.0 {
            best = (len, order.iter().map(|&k| index[k]).collect(), heights);
        }
    }
    best
}

fn candidate_orders(k: usize) -> Vec<Vec<usize>> {
    if k <= 3 {
        let mut out = Vec::new();
        permute(&mut (0..k).collect::<Vec<_>>(), 0, &mut out);
        out
    } else {
        let fwd: Vec<usize> = (0..k).collect();
        let rev: Vec<usize> = (0..k).rev().collect();
        vec![fwd, rev]
    }
}

fn permute(items: &mut Vec<usize>, start: usize, out: &mut Vec<Vec<usize>>) {
    if start == items.len() {
        out.push(items.clone());
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, out);
        items.swap(start, i);
    }
}

fn path_length(legs: &[(f64, f64)], heights: &[f64], h_end: f64) -> f64 {
    let mut prev = 0.0;
    let mut total = 0.0;
    for (k, &(rate, gap)) in legs.iter().enumerate() {
        let next = if k + 1 == legs.len() { h_end } else { heights[k] };
        total += log_model_distance(rate, gap, prev, next);
        prev = next;
    }
    total
}

/// Coordinate-wise golden-section search over the `legs.len() − 1`
/// intermediate heights.
fn optimise_heights(legs: &[(f64, f64)], h_end: f64) -> (f64, Vec<f64>) {
    let mut heights = vec![h_end; legs.len() - 1];
    let naive = path_length(legs, &heights, h_end);
    let lo = h_end.min(0.0) - naive;
    let hi = h_end.max(0.0) + naive;
    let sweeps = if heights.len() == 1 { 1 } else { 4 };
    for _ in 0..sweeps {
        for k in 0..heights.len() {
            let mut f = |t: f64| {
                let mut trial = heights.clone();
                trial[k] = t;
                path_length(legs, &trial, h_end)
            };
            heights[k] = golden_section(&mut f, lo, hi, 1e-10 * (1.0 + naive));
        }
    }
    (path_length(legs, &heights, h_end), heights)
}

fn golden_section<F: FnMut(f64) -> f64>(f: &mut F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Unit initial direction `(dx, dh)` and length of the geodesic from the
/// origin to `(gap, h)` in the two-dimensional metric of rate `rate`.
pub fn planar_geodesic_start(rate: f64, gap: f64, h: f64) -> ([f64; 2], f64) {
    let length = log_model_distance(rate, gap, 0.0, h);
    if gap == 0.0 {
        return ([0.0, h.signum()], length);
    }
    if rate == 0.0 {
        return ([gap / length, h / length], length);
    }
    // Reflect negative rates onto positive ones through h ↦ −h.
    let (b, hh) = if rate > 0.0 { (rate, h) } else { (-rate, -h) };
    // Half-plane images (0, 1) and (b·gap, e^{b h}); the geodesic is the
    // circle through both centred on the boundary at `centre`.
    let (x1, y1) = (b * gap, (b * hh).exp());
    let centre = (x1 * x1 + y1 * y1 - 1.0) / (2.0 * x1);
    let norm = (1.0 + centre * centre).sqrt();
    let dh = centre / norm;
    ([1.0 / norm, if rate > 0.0 { dh } else { -dh }], length)
}

/// Largest number of nonzero horizontal target coordinates the shooting
/// solver handles.
pub const MAX_ACTIVE: usize = 32;

/// Variational system over `s ∈ [0, 1]` for the active coordinates.
struct ShootingSystem<'a> {
    rates: &'a [f64],
    active: &'a [usize],
    c: &'a [f64],
}

impl ShootingSystem<'_> {
    fn k(&self) -> usize {
        self.active.len()
    }
    fn unknowns(&self) -> usize {
        self.k() + 1
    }
}

impl OdeSystem for ShootingSystem<'_> {
    fn dim(&self) -> usize {
        (self.k() + 2) * (1 + self.unknowns())
    }

    /// Step control follows the geodesic itself; the sensitivities ride
    /// along on the same steps.
    fn error_dims(&self) -> usize {
        self.k() + 2
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError> {
        let k = self.k();
        let m = self.unknowns();
        let h = y[k];
        let sens = &y[k + 2..];
        let (state_dy, dsens) = dy.split_at_mut(k + 2);
        let mut growth = [0.0f64; MAX_ACTIVE];
        let mut accel = 0.0;
        let mut curvature = 0.0;
        for r in 0..k {
            let a = self.rates[self.active[r]];
            let exponent = a * h;
            if exponent.abs() > EXPONENT_GUARD || !exponent.is_finite() {
                return Err(IntegrationError::Range { exponent, at: t });
            }
            let c = self.c[r];
            let e = (2.0 * exponent).exp();
            growth[r] = e;
            state_dy[r] = c * e;
            accel -= a * c * c * e;
            curvature += 2.0 * a * a * c * c * e;
        }
        state_dy[k] = y[k + 1];
        state_dy[k + 1] = accel;
        // Sensitivity rows: x_active (k), h, ḣ; columns: the m unknowns.
        let h_row = &sens[k * m..(k + 1) * m];
        let hd_row = &sens[(k + 1) * m..(k + 2) * m];
        for r in 0..k {
            let a = self.rates[self.active[r]];
            let coupling = 2.0 * a * self.c[r] * growth[r];
            let row = &mut dsens[r * m..(r + 1) * m];
            for j in 0..m {
                row[j] = coupling * h_row[j];
            }
            row[r] += growth[r];
        }
        for j in 0..m {
            dsens[k * m + j] = hd_row[j];
            let direct = if j < k {
                let a = self.rates[self.active[j]];
                -2.0 * a * self.c[j] * growth[j]
            } else {
                0.0
            };
            dsens[(k + 1) * m + j] = direct - curvature * h_row[j];
        }
        Ok(())
    }
}

/// Reusable shooting solver for one parameter vector.
pub struct Shooter<'p> {
    p: &'p MetricParams,
    groups: RateGroups,
}

/// A converged or abandoned shooting run from one start.
#[derive(Debug, Clone)]
struct Attempt {
    w: Vec<f64>,
    residual: f64,
    converged: bool,
    evals: usize,
}

impl<'p> Shooter<'p> {
    pub fn new(p: &'p MetricParams) -> Self {
        Self { p, groups: RateGroups::new(p) }
    }

    pub fn params(&self) -> &MetricParams {
        self.p
    }

    pub fn lower_bound(&self, x: &[f64]) -> f64 {
        lower_bound_with(&self.groups, x)
    }

    pub fn upper_bound(&self, x: &[f64]) -> f64 {
        upper_bound_with(&self.groups, x).0
    }

    /// Distance from the origin to `target`.
    pub fn distance(&self, target: &Point, opts: &ShootingOptions) -> Result<DistanceResult> {
        target.check(self.p)?;
        opts.integrator.validate()?;
        let x = target.coords();
        let n = self.p.n();
        let h = x[n];
        let dim = self.p.dim();
        let active: Vec<usize> = (0..n).filter(|&i| x[i] != 0.0).collect();
        if active.len() > MAX_ACTIVE {
            return Err(Error::InvalidArgument(format!("shooting supports at most {MAX_ACTIVE} coordinates")));
        }

        let lower = self.lower_bound(x);
        if active.is_empty() {
            let mut dir = vec![0.0; dim];
            dir[n] = if h >= 0.0 { 1.0 } else { -1.0 };
            return Ok(DistanceResult {
                value: h.abs(),
                direction: Tangent::at_origin(self.p, dir)?,
                residual: 0.0,
                status: DistanceStatus::Converged,
                restarts_used: 0,
                evaluations: 0,
            });
        }

        let starts = self.starts(x, &active, opts);
        let unique = self.p.unique_geodesics();
        let certify_tol = 1e-9 * (1.0 + lower);
        let mut best: Option<Attempt> = None;
        let mut best_residual = f64::INFINITY;
        let mut best_failed: Option<Attempt> = None;
        let mut used = 0;
        let mut evals = 0;
        let mut certified = false;
        let mut ws = Dopri5::new((active.len() + 2) * (active.len() + 2));
        for w0 in starts {
            used += 1;
            let attempt = self.newton(x, &active, w0, opts, &mut ws);
            evals += attempt.evals;
            if !attempt.converged {
                if attempt.residual < best_residual {
                    best_residual = attempt.residual;
                    best_failed = Some(attempt);
                }
                continue;
            }
            let len = norm(&attempt.w);
            if best.as_ref().is_none_or(|b| len < norm(&b.w)) {
                best = Some(attempt);
            }
            if unique || len <= lower + certify_tol {
                certified = true;
                break;
            }
            if opts.accept_below.is_some_and(|t| len <= t) {
                break;
            }
        }

        let (attempt, status) = match best {
            Some(a) => (a, if certified { DistanceStatus::Converged } else { DistanceStatus::UpperBoundOnly }),
            None => (
                best_failed.unwrap_or(Attempt { w: vec![0.0; active.len() + 1], residual: f64::INFINITY, converged: false, evals: 0 }),
                DistanceStatus::Failed,
            ),
        };
        let mut full = vec![0.0; dim];
        for (r, &i) in active.iter().enumerate() {
            full[i] = attempt.w[r];
        }
        full[n] = attempt.w[active.len()];
        let value = norm(&full);
        let direction = if value > 0.0 {
            full.iter().map(|v| v / value).collect()
        } else {
            let mut d = vec![0.0; dim];
            d[n] = 1.0;
            d
        };
        Ok(DistanceResult {
            value,
            direction: Tangent::at_origin(self.p, direction)?,
            residual: attempt.residual,
            status,
            restarts_used: used,
            evaluations: evals,
        })
    }

    /// Heuristic starts followed by quasi-random directions of the
    /// broken-path length, all restricted to the orthant of the target.
    fn starts(&self, x: &[f64], active: &[usize], opts: &ShootingOptions) -> Vec<Vec<f64>> {
        let n = self.p.n();
        let h = x[n];
        let k = active.len();
        let (upper, order, heights) = upper_bound_with(&self.groups, x);
        let gaps = self.groups.gaps(x);
        let mut out = Vec::new();

        // First leg of the broken path: its planar direction for the group
        // moved first, with the remaining coordinates nudged into their
        // orthant.
        if let Some(&first) = order.first() {
            let (rate, members) = &self.groups.groups[first];
            let h1 = heights.first().copied().unwrap_or(h);
            let (dir, len) = planar_geodesic_start(*rate, gaps[first], h1);
            let mut w = vec![0.0; k + 1];
            for (r, &i) in active.iter().enumerate() {
                w[r] = if members.contains(&i) {
                    dir[0] * x[i] / gaps[first]
                } else {
                    1e-3 * x[i].signum()
                };
            }
            w[k] = dir[1];
            out.push(scaled(w, upper.max(len)));
        }

        // Weighted blend of the per-group planar directions to the target.
        let mut blend = vec![0.0; k + 1];
        let mut total = 0.0;
        for (g, (rate, members)) in self.groups.groups.iter().enumerate() {
            if gaps[g] == 0.0 {
                continue;
            }
            let (dir, len) = planar_geodesic_start(*rate, gaps[g], h);
            total += len;
            for (r, &i) in active.iter().enumerate() {
                if members.contains(&i) {
                    blend[r] += dir[0] * x[i] / gaps[g] * len;
                }
            }
            blend[k] += dir[1] * len;
        }
        if total > 0.0 {
            out.push(scaled(blend, upper));
        }

        for u in sphere_points(k + 1, opts.restarts, opts.seed) {
            let w: Vec<f64> = (0..=k).map(|r| if r < k { u[r].abs() * x[active[r]].signum() } else { u[r] }).collect();
            out.push(scaled(w, upper));
        }
        out
    }

    fn newton(
        &self,
        x: &[f64],
        active: &[usize],
        mut w: Vec<f64>,
        opts: &ShootingOptions,
        ws: &mut Dopri5,
    ) -> Attempt {
        let k = active.len();
        let m = k + 1;
        let n = self.p.n();
        let target_h = x[n];
        let weights: Vec<f64> = active.iter().map(|&i| (-self.p.rates()[i] * target_h).exp()).collect();
        let signs: Vec<f64> = active.iter().map(|&i| x[i].signum()).collect();

        let count = std::cell::Cell::new(0usize);
        let eval = |w: &[f64], ws: &mut Dopri5| -> Option<(Vec<f64>, DMatrix<f64>, f64)> {
            count.set(count.get() + 1);
            let (end, jac) = self.endpoint_with_jacobian(active, w, &opts.integrator, ws).ok()?;
            let mut f = vec![0.0; m];
            let mut r2 = 0.0;
            for r in 0..k {
                f[r] = weights[r] * (end[r] - x[active[r]]);
                r2 += f[r] * f[r];
            }
            f[k] = end[k] - target_h;
            r2 += f[k] * f[k];
            let mut scaled_jac = jac;
            for r in 0..k {
                for j in 0..m {
                    scaled_jac[(r, j)] *= weights[r];
                }
            }
            Some((f, scaled_jac, r2.sqrt()))
        };

        let Some((mut f, mut jac, mut res)) = eval(&w, ws) else {
            return Attempt { w, residual: f64::INFINITY, converged: false, evals: 1 };
        };
        for _ in 0..opts.max_newton_iters {
            if res <= opts.residual_tol {
                return Attempt { w, residual: res, converged: true, evals: count.get() };
            }
            let rhs = DVector::from_iterator(m, f.iter().map(|v| -v));
            let step = jac.clone().lu().solve(&rhs).or_else(|| jac.clone().svd(true, true).solve(&rhs, 1e-14).ok());
            let Some(step) = step else { break };
            let mut delta: Vec<f64> = step.iter().copied().collect();
            if delta.iter().any(|v| !v.is_finite()) {
                break;
            }
            // Cap the step relative to the current length.
            let cap = 0.5 * norm(&w).max(1.0);
            let dn = norm(&delta);
            if dn > cap {
                delta.iter_mut().for_each(|v| *v *= cap / dn);
            }
            // Stay strictly inside the orthant of the target.
            let mut alpha: f64 = 1.0;
            for r in 0..k {
                let next = w[r] + delta[r];
                if next * signs[r] <= 0.0 {
                    alpha = alpha.min(0.9 * w[r].abs() / delta[r].abs());
                }
            }
            let mut accepted = false;
            for _ in 0..12 {
                let trial: Vec<f64> = w.iter().zip(&delta).map(|(a, b)| a + alpha * b).collect();
                if let Some((f2, j2, r2)) = eval(&trial, ws) {
                    if r2 <= (1.0 - 1e-4 * alpha) * res {
                        w = trial;
                        f = f2;
                        jac = j2;
                        res = r2;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let converged = res <= opts.residual_tol;
        Attempt { w, residual: res, converged, evals: count.get() }
    }

    /// Endpoint `(x_active, h)` at `s = 1` and its Jacobian with respect to
    /// the unknowns `(C_active, ẋ_{N+1}(0))`.
    fn endpoint_with_jacobian(
        &self,
        active: &[usize],
        w: &[f64],
        cfg: &IntegratorConfig,
        ws: &mut Dopri5,
    ) -> Result<(Vec<f64>, DMatrix<f64>), IntegrationError> {
        let k = active.len();
        let m = k + 1;
        let sys = ShootingSystem { rates: self.p.rates(), active, c: &w[..k] };
        let mut y = vec![0.0; sys.dim()];
        y[k + 1] = w[k];
        // ∂ẋ_{N+1}(0)/∂w_k = 1.
        y[k + 2 + (k + 1) * m + k] = 1.0;
        ws.integrate(&sys, 0.0, &mut y, 1.0, cfg, |_| Control::Continue)?;
        let end = y[..=k].to_vec();
        let jac = DMatrix::from_fn(m, m, |r, j| y[k + 2 + r * m + j]);
        Ok((end, jac))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scaled(mut w: Vec<f64>, length: f64) -> Vec<f64> {
    let n = norm(&w);
    if n > 0.0 {
        w.iter_mut().for_each(|v| *v *= length / n);
    }
    w
}

/// Distance from the origin to `target` with default solver settings apart
/// from the integrator, restart count and seed.
pub fn distance(
    p: &MetricParams,
    target: &Point,
    cfg: &IntegratorConfig,
    restarts: usize,
    seed: u64,
) -> Result<DistanceResult> {
    let opts = ShootingOptions { integrator: *cfg, restarts, seed, ..ShootingOptions::for_params(p) };
    Shooter::new(p).distance(target, &opts)
}

/// Distance between two arbitrary points, by left translation of `to` with
/// the inverse of `from`: `(x, h) ↦ (e^{−a_i h₀}(x_i − x₀_i), h − h₀)`.
pub fn distance_between(p: &MetricParams, from: &Point, to: &Point, opts: &ShootingOptions) -> Result<DistanceResult> {
    from.check(p)?;
    to.check(p)?;
    let translated = translate_to_origin(p, from, to)?;
    Shooter::new(p).distance(&translated, opts)
}

/// Image of `to` under the left translation taking `from` to the origin.
pub fn translate_to_origin(p: &MetricParams, from: &Point, to: &Point) -> Result<Point> {
    check_dim(p.dim(), from.dim())?;
    check_dim(p.dim(), to.dim())?;
    let h0 = from.height();
    let mut out: Vec<f64> =
        p.rates().iter().enumerate().map(|(i, a)| (-a * h0).exp() * (to[i] - from[i])).collect();
    out.push(to.height() - h0);
    Point::new(out)
}
