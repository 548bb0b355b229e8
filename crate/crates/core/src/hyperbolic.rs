//! Constant-curvature reference geometry and the closed-form bounds that
//! sandwich ball volumes of `g_a`.
//!
//! For a single rate `p`, `Σ e^{-2p x_{N+1}} dx_i² + dx_{N+1}²` is hyperbolic
//! space of curvature `−p²`: the map `(x, x_{N+1}) ↦ (x, e^{p x_{N+1}}/p)`
//! carries it onto `p^{-2}` times the Poincaré half-space metric.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::params::{MetricParams, Point};
use crate::quadrature::integrate;

const QUAD_REL_TOL: f64 = 1e-10;

/// `(x, x_{N+1}) ↦ (x, e^{p x_{N+1}} / p)`.
pub fn log_model_map(rate: f64, pt: &Point) -> Result<Point> {
    if rate == 0.0 || !rate.is_finite() {
        return Err(Error::InvalidArgument("log-model rate must be finite and nonzero".into()));
    }
    let mut y = pt.coords().to_vec();
    let last = y.len() - 1;
    y[last] = (rate * y[last]).exp() / rate;
    Point::new(y)
}

/// Inverse of [`log_model_map`]; the last coordinate must have the sign of
/// `rate`.
pub fn log_model_inverse(rate: f64, pt: &Point) -> Result<Point> {
    if rate == 0.0 || !rate.is_finite() {
        return Err(Error::InvalidArgument("log-model rate must be finite and nonzero".into()));
    }
    let mut x = pt.coords().to_vec();
    let last = x.len() - 1;
    let scaled = rate * x[last];
    if !(scaled > 0.0) {
        return Err(Error::InvalidArgument("point lies outside the image half-space".into()));
    }
    x[last] = scaled.ln() / rate;
    Point::new(x)
}

/// Distance in the single-rate metric between two points whose horizontal
/// separation has Euclidean norm `horizontal_gap`, at heights `h1`, `h2`.
///
/// `d = (2/|p|) asinh(q)`, `q² = (p·gap/2)² e^{-p(h1+h2)} + sinh²(p(h1−h2)/2)`,
/// which is cancellation-free and reduces to the Euclidean distance at `p = 0`.
pub fn log_model_distance(rate: f64, horizontal_gap: f64, h1: f64, h2: f64) -> f64 {
    if rate == 0.0 {
        return horizontal_gap.hypot(h1 - h2);
    }
    let horiz = 0.5 * rate * horizontal_gap;
    let vert = (0.5 * rate * (h1 - h2)).sinh();
    let q = (horiz * horiz * (-rate * (h1 + h2)).exp() + vert * vert).sqrt();
    2.0 / rate.abs() * q.asinh()
}

/// Distance between `z = (x, x_2)` and `w` in `(ℝ², e^{-2p x_2} dx_1² + dx_2²)`.
pub fn hyperbolic_distance_2d(rate: f64, z: [f64; 2], w: [f64; 2]) -> f64 {
    log_model_distance(rate, (z[0] - w[0]).abs(), z[1], w[1])
}

/// Volume of the round unit `n`-sphere `S^n ⊂ ℝ^{n+1}`.
pub fn sphere_volume(n: usize) -> f64 {
    let k = (n as f64 + 1.0) / 2.0;
    2.0 * std::f64::consts::PI.powf(k) / gamma(k)
}

/// Volume of the radius-`rho` ball in the `(N+1)`-dimensional hyperbolic
/// space of curvature `−p²`: `ω_N p^{-N} ∫_0^ρ sinh(p r)^N dr`.
pub fn hyperbolic_ball_volume(rate: f64, n: usize, rho: f64) -> Result<f64> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("radius must be finite and ≥ 0, got {rho}")));
    }
    if !(rate > 0.0) || n == 0 {
        return Err(Error::InvalidArgument("rate must be positive and N ≥ 1".into()));
    }
    if n == 1 {
        return Ok(4.0 * std::f64::consts::PI / (rate * rate) * (0.5 * rate * rho).sinh().powi(2));
    }
    Ok(sphere_volume(n) / rate.powi(n as i32) * sinh_power_integral(rate, n, rho))
}

/// `∫_0^ρ sinh(p r)^N dr` by adaptive quadrature.
pub fn sinh_power_integral(rate: f64, n: usize, rho: f64) -> f64 {
    integrate(|r| (rate * r).sinh().powi(n as i32), 0.0, rho, QUAD_REL_TOL, 0.0).0
}

/// Axis-aligned box `|x_i| ≤ half_widths[i]` (last entry: `|x_{N+1}|`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateBox {
    pub half_widths: Vec<f64>,
}

impl CoordinateBox {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.half_widths).all(|(v, w)| v.abs() <= *w)
    }

    /// Lebesgue volume.
    pub fn volume(&self) -> f64 {
        self.half_widths.iter().map(|w| 2.0 * w).product()
    }
}

/// `|x_{N+1}| ≤ ρ`, `|x_i| ≤ ρ e^{|a_i| ρ}`.
pub fn coordinate_box_bound(p: &MetricParams, rho: f64) -> Result<CoordinateBox> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("radius must be finite and ≥ 0, got {rho}")));
    }
    let mut half_widths: Vec<f64> = p.rates().iter().map(|a| rho * (a.abs() * rho).exp()).collect();
    half_widths.push(rho);
    Ok(CoordinateBox { half_widths })
}

/// Largest `|x_i|` over the radius-`rho` ball at height `x_last` in the
/// two-dimensional metric of rate `rate`:
/// `(√2/|a|) e^{a h/2} (cosh(aρ) − cosh(a h))^{1/2}`, evaluated in the product
/// form `(2/|a|) e^{a h/2} (sinh(|a|(ρ+h)/2) sinh(|a|(ρ−h)/2))^{1/2}`.
/// Valid for either sign of the rate; a zero rate gives `(ρ² − h²)^{1/2}`.
pub fn envelope(rate: f64, x_last: f64, rho: f64) -> f64 {
    let plus = (rho + x_last).max(0.0);
    let minus = (rho - x_last).max(0.0);
    if rate == 0.0 {
        return (plus * minus).sqrt();
    }
    let b = rate.abs();
    2.0 / b * (0.5 * rate * x_last).exp() * ((0.5 * b * plus).sinh() * (0.5 * b * minus).sinh()).sqrt()
}

/// Envelope bound on `|x_i|` for coordinate `i` of `p`.
pub fn xi_envelope_bound(p: &MetricParams, i: usize, x_last: f64, rho: f64) -> Result<f64> {
    if i >= p.n() {
        return Err(Error::InvalidArgument(format!("coordinate {i} is not horizontal")));
    }
    if !(x_last.abs() <= rho) {
        return Err(Error::InvalidArgument(format!("height {x_last} lies outside [−ρ, ρ] for ρ = {rho}")));
    }
    Ok(envelope(p.rates()[i], x_last, rho))
}

/// Numeric lower and upper bounds on `Vol(B(0, ρ))`, tagged by the formula
/// that produced each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rho: f64,
    pub lower: f64,
    pub upper: f64,
    pub formula_tags: Vec<String>,
}

impl BoundReport {
    /// Whether `value ± slack` overlaps `[lower, upper]`.
    pub fn admits(&self, value: f64, slack: f64) -> bool {
        value + slack >= self.lower && value - slack <= self.upper
    }
}

/// Envelope-integral upper bound. `C = 2^{3N/2} / Π|a_i|`, `P = posSum`,
/// `Q = negSum`:
/// * one sign: `2C e^{Σ|a_i| ρ} / Σ|a_i|`;
/// * mixed, `P = Q`: `2C ρ e^{P ρ}`;
/// * mixed otherwise: `2C (e^{Pρ} − e^{Qρ}) / (P − Q)`.
pub fn volume_upper_bound(p: &MetricParams, rho: f64) -> Result<(f64, &'static str)> {
    require_bound_inputs(p, rho)?;
    let n = p.n() as f64;
    let prod: f64 = p.rates().iter().map(|a| a.abs()).product();
    let c = 2f64.powf(1.5 * n) / prod;
    let (pos, neg) = (p.pos_sum(), p.neg_sum());
    if !p.unique_geodesics() {
        if pos == neg {
            return Ok((2.0 * c * rho * (pos * rho).exp(), "upper:unimodular_envelope"));
        }
        let gap = pos - neg;
        return Ok((2.0 * c * ((pos * rho).exp() - (neg * rho).exp()) / gap, "upper:mixed_envelope"));
    }
    let total = pos + neg;
    Ok((2.0 * c * (total * rho).exp() / total, "upper:same_sign_envelope"))
}

/// Lower bound.
/// * one sign: `(ω_N / (2 S^N)) e^{−(N−1) S ρ} ∫_0^ρ sinh(S r)^N dr` with
///   `S = Σ|a_i|`, or the exact hyperbolic volume when all rates coincide;
/// * mixed: coordinates are deleted one at a time using
///   `Vol_a(ρ) ≥ ∫_0^ρ Vol_{a∖i}(r) dr` until a one-signed sub-vector
///   remains; `k` deletions collapse to
///   `(1/(k−1)!) ∫_0^ρ (ρ − r)^{k−1} V_sub(r) dr`, maximised over sub-vectors.
pub fn volume_lower_bound(p: &MetricParams, rho: f64) -> Result<(f64, String)> {
    require_bound_inputs(p, rho)?;
    if p.unique_geodesics() {
        return Ok(same_sign_lower(p.rates(), rho));
    }
    let a = p.rates();
    let n = a.len();
    let mut best = (0.0, String::from("lower:none"));
    for mask in 1u32..(1 << n) {
        let sub: Vec<f64> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
        let one_signed = sub.iter().all(|&v| v > 0.0) || sub.iter().all(|&v| v < 0.0);
        if !one_signed {
            continue;
        }
        let k = n - sub.len();
        let fact: f64 = (1..k).map(|j| j as f64).product();
        let (value, _) = integrate(
            |r| (rho - r).powi(k as i32 - 1) * same_sign_lower(&sub, r).0,
            0.0,
            rho,
            QUAD_REL_TOL,
            0.0,
        );
        let value = value / fact;
        if value > best.0 {
            best = (value, format!("lower:deletion_recursion(keep={sub:?},deleted={k})"));
        }
    }
    Ok(best)
}

fn same_sign_lower(a: &[f64], rho: f64) -> (f64, String) {
    let n = a.len();
    let first = a[0];
    if a.iter().all(|&v| v == first) {
        let v = hyperbolic_ball_volume(first.abs(), n, rho).expect("validated radius and rate");
        return (v, "lower:exact_hyperbolic".into());
    }
    (half_ball_lower_bound(a, rho), "lower:same_sign_half_ball".into())
}

/// `(ω_N / (2 S^N)) e^{−(N−1) S ρ} ∫_0^ρ sinh(S r)^N dr`, `S = Σ|a_i|`, a lower
/// bound on the ball volume for one-signed rates.
pub fn half_ball_lower_bound(a: &[f64], rho: f64) -> f64 {
    let n = a.len();
    let s: f64 = a.iter().map(|v| v.abs()).sum();
    sphere_volume(n) / (2.0 * s.powi(n as i32)) * (-(n as f64 - 1.0) * s * rho).exp() * sinh_power_integral(s, n, rho)
}

fn require_bound_inputs(p: &MetricParams, rho: f64) -> Result<()> {
    if !p.all_nonzero() {
        return Err(Error::ZeroRate("volume bounds"));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("radius must be finite and positive, got {rho}")));
    }
    Ok(())
}

pub fn volume_bounds(p: &MetricParams, rho: f64) -> Result<BoundReport> {
    let (upper, upper_tag) = volume_upper_bound(p, rho)?;
    let (lower, lower_tag) = volume_lower_bound(p, rho)?;
    Ok(BoundReport { rho, lower, upper, formula_tags: vec![lower_tag, upper_tag.to_string()] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(a: &[f64]) -> MetricParams {
        MetricParams::from_slice(a).unwrap()
    }

    #[test]
    fn log_map_examples() {
        let o = log_model_map(1.0, &Point::origin(3)).unwrap();
        assert_eq!(o.coords(), &[0.0, 0.0, 1.0]);
        let half = log_model_map(2.0, &Point::new(vec![0.7, 0.0]).unwrap()).unwrap();
        assert_eq!(half.coords(), &[0.7, 0.5]);
        assert!(log_model_map(0.0, &Point::origin(2)).is_err());
        let pt = Point::new(vec![0.3, -1.0, 0.4]).unwrap();
        let back = log_model_inverse(-1.5, &log_model_map(-1.5, &pt).unwrap()).unwrap();
        for (x, y) in back.coords().iter().zip(pt.coords()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn distance_examples() {
        assert!((hyperbolic_distance_2d(1.0, [0.0, 0.0], [0.0, 2.5]) - 2.5).abs() < 1e-15);
        let d = hyperbolic_distance_2d(1.0, [0.0, 0.0], [1.0, 0.0]);
        assert!((d - 1.5f64.acosh()).abs() < 1e-15);
        assert!((d - 0.962_423_650_119_206_9).abs() < 1e-12);
    }

    #[test]
    fn ball_volume_examples() {
        assert_eq!(hyperbolic_ball_volume(1.0, 1, 0.0).unwrap(), 0.0);
        assert!(hyperbolic_ball_volume(1.0, 2, -1.0).is_err());
        let v = hyperbolic_ball_volume(1.0, 1, 2.0).unwrap();
        assert!((v - 4.0 * PI * 1f64.sinh().powi(2)).abs() < 1e-12);
        // ∫ sinh² = sinh(2ρ)/4 − ρ/2 closes the N = 2 case.
        let v = hyperbolic_ball_volume(1.0, 2, 1.0).unwrap();
        let closed = 4.0 * PI * (2f64.sinh() / 4.0 - 0.5);
        assert!((v / closed - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_volumes() {
        assert!((sphere_volume(1) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_volume(2) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_volume(3) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn box_examples() {
        let b = coordinate_box_bound(&params(&[1.0, -1.0]), 1.0).unwrap();
        let e = 1f64.exp();
        assert_eq!(b.half_widths, vec![e, e, 1.0]);
        assert_eq!(coordinate_box_bound(&params(&[1.0]), 0.0).unwrap().half_widths, vec![0.0, 0.0]);
        assert_eq!(coordinate_box_bound(&params(&[0.0]), 2.0).unwrap().half_widths, vec![2.0, 2.0]);
    }

    #[test]
    fn envelope_examples() {
        let p = params(&[1.0, -1.0]);
        assert_eq!(xi_envelope_bound(&p, 0, 3.0, 3.0).unwrap(), 0.0);
        let rho = 2.7;
        let got = xi_envelope_bound(&p, 0, 0.0, rho).unwrap();
        assert!((got - 2.0 * (rho / 2.0).sinh()).abs() < 1e-14);
        let (a, h) = (1.0f64, 1.3f64);
        let direct = 2f64.sqrt() / a * (a * h / 2.0).exp() * ((a * rho).cosh() - (a * h).cosh()).sqrt();
        assert!((xi_envelope_bound(&p, 0, 1.3, rho).unwrap() - direct).abs() < 1e-13);
        assert!(xi_envelope_bound(&p, 0, 3.1, 3.0).is_err());
    }

    #[test]
    fn bounds_examples() {
        let rho = 2.0;
        // a = (1, 1): 2^{1+3} e^{2ρ} / 2 = 8 e^{2ρ}.
        let (up, _) = volume_upper_bound(&params(&[1.0, 1.0]), rho).unwrap();
        assert!((up / (8.0 * (2.0 * rho).exp()) - 1.0).abs() < 1e-14);
        // a = (1, −1): 2 · 2³ · ρ e^ρ.
        let (up, tag) = volume_upper_bound(&params(&[1.0, -1.0]), rho).unwrap();
        assert_eq!(tag, "upper:unimodular_envelope");
        assert!((up / (16.0 * rho * rho.exp()) - 1.0).abs() < 1e-14);
        // a = (1,) keeps the exact area, which is the best available lower bound.
        let (low, _) = volume_lower_bound(&params(&[1.0]), rho).unwrap();
        assert!((low - 2.0 * PI * (rho.cosh() - 1.0)).abs() < 1e-12);
        assert!((half_ball_lower_bound(&[1.0], rho) - PI * (rho.cosh() - 1.0)).abs() < 1e-12);
        // Half-ball lower bound on a non-constant one-signed vector.
        let (low, tag) = same_sign_lower(&[1.0, 2.0], rho);
        assert_eq!(tag, "lower:same_sign_half_ball");
        let expect = 4.0 * PI / 18.0 * (-3.0 * rho).exp() * ((6.0 * rho).sinh() / 12.0 - rho / 2.0);
        assert!((low / expect - 1.0).abs() < 1e-9);
        // Mixed: one deletion from (1, −1) gives 2π(sinh ρ − ρ).
        let (low, _) = volume_lower_bound(&params(&[1.0, -1.0]), rho).unwrap();
        assert!((low / (2.0 * PI * (rho.sinh() - rho)) - 1.0).abs() < 1e-9);
        assert!(volume_bounds(&params(&[1.0, 0.0]), rho).is_err());
    }

    #[test]
    fn lower_below_upper() {
        for a in [vec![1.0], vec![1.0, 2.0], vec![1.0, -1.0], vec![2.0, -0.5, 1.0], vec![-1.0, -1.0, -3.0]] {
            for rho in [1.0, 2.0, 5.0, 9.0] {
                let b = volume_bounds(&params(&a), rho).unwrap();
                assert!(b.lower > 0.0 && b.lower <= b.upper, "{a:?} ρ={rho}: {b:?}");
            }
        }
    }
}
