//! Geodesics of `g_a` through the reduced first-order system.
//!
//! The horizontal momenta `C_i = ẋ_i e^{-2 a_i x_{N+1}}` are first integrals,
//! so the integrated state is `(x_1, …, x_N, x_{N+1}, ẋ_{N+1})` with `C` held
//! as a parameter:
//!
//! ```text
//! ẋ_i       = C_i e^{2 a_i x_{N+1}}
//! ẍ_{N+1}   = −Σ a_i C_i² e^{2 a_i x_{N+1}}
//! ```

use serde::{Deserialize, Serialize};

pub use crate::ode::IntegratorConfig;
use crate::error::{check_dim, Error, IntegrationError, Result};
use crate::ode::{Control, Dopri5, OdeSystem};
use crate::params::{MetricParams, Point, Tangent};

/// `|a_i x_{N+1}|` above which the integrator refuses to continue.
pub const EXPONENT_GUARD: f64 = 300.0;

/// Position, coordinate velocity and first integrals at arc-length `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicState {
    pub s: f64,
    pub x: Point,
    pub xdot: Vec<f64>,
    pub c: Vec<f64>,
}

impl GeodesicState {
    /// Rebuild the full state from the reduced vector `(x, ẋ_{N+1})`.
    pub fn from_reduced(p: &MetricParams, s: f64, c: &[f64], reduced: &[f64]) -> Self {
        let n = p.n();
        let h = reduced[n];
        let xdot = p
            .rates()
            .iter()
            .zip(c)
            .map(|(a, ci)| ci * (2.0 * a * h).exp())
            .chain(std::iter::once(reduced[n + 1]))
            .collect();
        Self { s, x: Point::new(reduced[..=n].to_vec()).unwrap_or_else(|_| Point::origin(n + 1)), xdot, c: c.to_vec() }
    }

    pub fn height(&self) -> f64 {
        self.x.height()
    }

    /// `g_a(ẋ, ẋ)`.
    pub fn speed_squared(&self, p: &MetricParams) -> f64 {
        let h = self.height();
        let n = p.n();
        let horizontal: f64 =
            p.rates().iter().zip(&self.xdot).map(|(a, v)| (-2.0 * a * h).exp() * v * v).sum();
        horizontal + self.xdot[n] * self.xdot[n]
    }

    /// `ẋ_i e^{-2 a_i x_{N+1}}` recomputed from the velocity.
    pub fn recomputed_constants(&self, p: &MetricParams) -> Vec<f64> {
        let h = self.height();
        p.rates().iter().zip(&self.xdot).map(|(a, v)| v * (-2.0 * a * h).exp()).collect()
    }

    /// Velocity as a tangent vector at the current point.
    pub fn velocity(&self, p: &MetricParams) -> Result<Tangent> {
        Tangent::from_coord(p, self.x.clone(), self.xdot.clone())
    }

    /// Column names of [`GeodesicState::csv_record`] for `N` horizontal
    /// coordinates.
    pub fn csv_header(n: usize) -> Vec<String> {
        let mut cols = vec!["s".to_string()];
        cols.extend((1..=n + 1).map(|i| format!("x{i}")));
        cols.extend((1..=n + 1).map(|i| format!("xdot{i}")));
        cols.push("speed_error".into());
        cols
    }

    /// `s, x_1..x_{N+1}, ẋ_1..ẋ_{N+1}, |g(ẋ,ẋ)^{1/2} − reference_speed|`.
    pub fn csv_record(&self, p: &MetricParams, reference_speed: f64) -> Vec<f64> {
        let mut row = vec![self.s];
        row.extend_from_slice(self.x.coords());
        row.extend_from_slice(&self.xdot);
        row.push((self.speed_squared(p).sqrt() - reference_speed).abs());
        row
    }
}

/// The reduced geodesic system with fixed first integrals.
pub struct GeodesicSystem<'a> {
    rates: &'a [f64],
    c: &'a [f64],
}

impl<'a> GeodesicSystem<'a> {
    pub fn new(p: &'a MetricParams, c: &'a [f64]) -> Self {
        Self { rates: p.rates(), c }
    }
}

impl OdeSystem for GeodesicSystem<'_> {
    fn dim(&self) -> usize {
        self.rates.len() + 2
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError> {
        let n = self.rates.len();
        let h = y[n];
        let mut accel = 0.0;
        for i in 0..n {
            let a = self.rates[i];
            let exponent = a * h;
            if exponent.abs() > EXPONENT_GUARD || !exponent.is_finite() {
                return Err(IntegrationError::Range { exponent, at: t });
            }
            let v = self.c[i] * (2.0 * exponent).exp();
            dy[i] = v;
            accel -= a * self.c[i] * v;
        }
        dy[n] = y[n + 1];
        dy[n + 1] = accel;
        Ok(())
    }
}

/// Derivative of the full state `(x, ẋ)` under the geodesic flow:
/// `(ẋ_1..ẋ_{N+1}, 0, …, 0, ẍ_{N+1})` with `ẍ_i` for `i ≤ N` implied by the
/// conservation of `C_i`.
pub fn geodesic_rhs(p: &MetricParams, state: &GeodesicState) -> Result<(Vec<f64>, Vec<f64>)> {
    state.x.check(p)?;
    check_dim(p.n(), state.c.len())?;
    let n = p.n();
    let sys = GeodesicSystem::new(p, &state.c);
    let mut reduced: Vec<f64> = state.x.coords().to_vec();
    reduced.push(state.xdot[n]);
    let mut dy = vec![0.0; n + 2];
    sys.rhs(state.s, &reduced, &mut dy)?;
    let hdot = dy[n];
    let hddot = dy[n + 1];
    let xdot: Vec<f64> = dy[..=n].to_vec();
    // ẍ_i = d/ds (C_i e^{2 a_i h}) = 2 a_i ḣ ẋ_i.
    let mut xddot: Vec<f64> = p.rates().iter().zip(&dy[..n]).map(|(a, v)| 2.0 * a * hdot * v).collect();
    xddot.push(hddot);
    Ok((xdot, xddot))
}

fn initial_reduced(p: &MetricParams, v: &Tangent) -> Result<(Vec<f64>, Vec<f64>)> {
    if v.base().coords().iter().any(|&x| x != 0.0) {
        return Err(Error::InvalidArgument("geodesics start at the origin".into()));
    }
    check_dim(p.dim(), v.coord().len())?;
    let n = p.n();
    let c = v.coord()[..n].to_vec();
    let mut y = vec![0.0; n + 2];
    y[n + 1] = v.coord()[n];
    Ok((c, y))
}

fn with_partial(p: &MetricParams, c: &[f64], y: &[f64], e: IntegrationError) -> Error {
    match e {
        IntegrationError::MaxSteps { max_steps, reached, .. } => Error::Integration(IntegrationError::MaxSteps {
            max_steps,
            reached,
            partial: Some(Box::new(GeodesicState::from_reduced(p, reached, c, y))),
        }),
        other => Error::Integration(other),
    }
}

/// `γ(t)` for the geodesic with `γ(0) = 0`, `γ̇(0) = v`.
pub fn exp_map(p: &MetricParams, v: &Tangent, t: f64, cfg: &IntegratorConfig) -> Result<GeodesicState> {
    cfg.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("geodesic parameter must be finite and ≥ 0, got {t}")));
    }
    let (c, mut y) = initial_reduced(p, v)?;
    let sys = GeodesicSystem::new(p, &c);
    let mut ws = Dopri5::new(sys.dim());
    ws.integrate(&sys, 0.0, &mut y, t, cfg, |_| Control::Continue)
        .map_err(|e| with_partial(p, &c, &y, e))?;
    Ok(GeodesicState::from_reduced(p, t, &c, &y))
}

/// Integrate from an arbitrary state for arc-length `dt` (negative `dt` runs
/// the geodesic backwards).
pub fn flow(p: &MetricParams, state: &GeodesicState, dt: f64, cfg: &IntegratorConfig) -> Result<GeodesicState> {
    cfg.validate()?;
    state.x.check(p)?;
    check_dim(p.n(), state.c.len())?;
    let n = p.n();
    let mut y: Vec<f64> = state.x.coords().to_vec();
    y.push(state.xdot[n]);
    let sys = GeodesicSystem::new(p, &state.c);
    let mut ws = Dopri5::new(sys.dim());
    let end = state.s + dt;
    ws.integrate(&sys, state.s, &mut y, end, cfg, |_| Control::Continue)
        .map_err(|e| with_partial(p, &state.c, &y, e))?;
    Ok(GeodesicState::from_reduced(p, end, &state.c, &y))
}

/// States at `s = 0, step, 2·step, …` up to `length`, plus the endpoint when
/// `length` is not a multiple of `step`. Interior samples come from the dense
/// output of accepted steps.
pub fn trace(
    p: &MetricParams,
    v: &Tangent,
    length: f64,
    step: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<GeodesicState>> {
    cfg.validate()?;
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("trace step must be positive".into()));
    }
    if !(length >= 0.0) || !length.is_finite() {
        return Err(Error::InvalidArgument("trace length must be finite and ≥ 0".into()));
    }
    let (c, mut y) = initial_reduced(p, v)?;
    let mut out = vec![GeodesicState::from_reduced(p, 0.0, &c, &y)];
    if length == 0.0 {
        return Ok(out);
    }
    let count = (length / step * (1.0 + 1e-12)).floor() as usize;
    let mut times: Vec<f64> = (1..=count).map(|k| k as f64 * step).collect();
    if times.last().is_some_and(|&t| (t - length).abs() <= 1e-12 * length) {
        times.pop();
    }
    let sys = GeodesicSystem::new(p, &c);
    let mut ws = Dopri5::new(sys.dim());
    let mut next = 0;
    let mut buf = vec![0.0; sys.dim()];
    ws.integrate(&sys, 0.0, &mut y, length, cfg, |stepper| {
        while next < times.len() && times[next] <= stepper.t_new() {
            stepper.eval(times[next], &mut buf);
            out.push(GeodesicState::from_reduced(p, times[next], &c, &buf));
            next += 1;
        }
        Control::Continue
    })
    .map_err(|e| with_partial(p, &c, &y, e))?;
    out.push(GeodesicState::from_reduced(p, length, &c, &y));
    Ok(out)
}

/// Whether `|x_i|` stays below `1e-10` along the geodesic from the origin
/// with initial velocity `v` (which must have `v_i = 0`) up to length `t`.
pub fn totally_geodesic_check(
    p: &MetricParams,
    coordinate: usize,
    v: &Tangent,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<bool> {
    if coordinate >= p.n() {
        return Err(Error::InvalidArgument(format!("coordinate {coordinate} is not horizontal")));
    }
    if v.coord()[coordinate] != 0.0 {
        return Err(Error::InvalidArgument("initial velocity must be tangent to the hyperplane".into()));
    }
    let samples = trace(p, v, t, (t / 64.0).max(1e-3), cfg)?;
    Ok(samples.iter().all(|s| s.x[coordinate].abs() <= 1e-10))
}
