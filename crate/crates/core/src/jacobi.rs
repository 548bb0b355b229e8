//! Polar volume density of the exponential map from matrix Jacobi fields.
//!
//! Along `γ(s) = exp(s v)` with frame velocity `u`, the fields `J_k` with
//! `J_k(0) = 0`, `∇J_k(0) = e_k` (an orthonormal basis of `v^⊥`) solve, in
//! the left-invariant frame,
//!
//! ```text
//! J' = P − Γ(u) J
//! P' = −R(J, u) u − Γ(u) P
//! ```
//!
//! where `P = ∇J` and `Γ(u)_{db} = Σ_a u^a Γ^d_{ab}` is antisymmetric. The
//! density is `det[J_1, …, J_N, u]`; it is positive up to the first
//! conjugate point.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, IntegrationError, Result};
use crate::geodesic::{IntegratorConfig, EXPONENT_GUARD};
use crate::metric::CurvatureTensor;
use crate::ode::{Control, DenseStep, Dopri5, OdeSystem};
use crate::params::MetricParams;

/// State layout: `h, ḣ, J (dim×N, row-major), P (dim×N), ∫ density`.
pub(crate) struct JacobiSystem<'a> {
    rates: &'a [f64],
    c: &'a [f64],
    tensor: &'a CurvatureTensor,
    /// Whether the last component integrates the density.
    pub(crate) with_quadrature: bool,
}

impl<'a> JacobiSystem<'a> {
    pub(crate) fn new(p: &'a MetricParams, c: &'a [f64], tensor: &'a CurvatureTensor) -> Self {
        Self { rates: p.rates(), c, tensor, with_quadrature: false }
    }

    fn n(&self) -> usize {
        self.rates.len()
    }

    fn block(&self) -> usize {
        (self.n() + 1) * self.n()
    }

    /// Initial state for the unit frame vector `v`.
    pub(crate) fn initial_state(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        let dim = n + 1;
        let mut y = vec![0.0; self.dim()];
        y[1] = v[n];
        let basis = complement_basis(v);
        let p_off = 2 + self.block();
        for k in 0..n {
            for d in 0..dim {
                y[p_off + d * n + k] = basis[(d, k)];
            }
        }
        y
    }

    /// Frame velocity at height `h` with vertical speed `hdot`.
    fn velocity(&self, h: f64, hdot: f64, u: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            u[i] = self.c[i] * (self.rates[i] * h).exp();
        }
        u[n] = hdot;
    }

    /// Signed density `det[J, u]` from a state vector.
    pub(crate) fn density(&self, y: &[f64]) -> f64 {
        let n = self.n();
        let dim = n + 1;
        let mut u = vec![0.0; dim];
        self.velocity(y[0], y[1], &mut u);
        let m = DMatrix::from_fn(dim, dim, |d, k| if k < n { y[2 + d * n + k] } else { u[d] });
        m.determinant()
    }
}

impl OdeSystem for JacobiSystem<'_> {
    fn dim(&self) -> usize {
        2 + 2 * self.block() + usize::from(self.with_quadrature)
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError> {
        let n = self.n();
        let dim = n + 1;
        let h = y[0];
        let mut u = [0.0f64; 17];
        let mut accel = 0.0;
        for i in 0..n {
            let exponent = self.rates[i] * h;
            if exponent.abs() > EXPONENT_GUARD || !exponent.is_finite() {
                return Err(IntegrationError::Range { exponent, at: t });
            }
            let e = exponent.exp();
            u[i] = self.c[i] * e;
            accel -= self.rates[i] * u[i] * u[i];
        }
        u[n] = y[1];
        dy[0] = y[1];
        dy[1] = accel;

        let mut tidal = [0.0f64; 17 * 17];
        self.tensor.tidal_matrix_into(&u[..dim], &mut tidal[..dim * dim]);
        let block = self.block();
        let (j, rest) = y[2..].split_at(block);
        let pmat = &rest[..block];
        let (dj, drest) = dy[2..].split_at_mut(block);
        let dp = &mut drest[..block];
        // Γ(u) has entries Γ[n][i] = a_i u_i and Γ[i][n] = −a_i u_i.
        for k in 0..n {
            let mut gj_n = 0.0;
            let mut gp_n = 0.0;
            for i in 0..n {
                let g = self.rates[i] * u[i];
                gj_n += g * j[i * n + k];
                gp_n += g * pmat[i * n + k];
            }
            let jn = j[n * n + k];
            let pn = pmat[n * n + k];
            for i in 0..n {
                let g = self.rates[i] * u[i];
                dj[i * n + k] = pmat[i * n + k] + g * jn;
                dp[i * n + k] = g * pn;
            }
            dj[n * n + k] = pmat[n * n + k] - gj_n;
            dp[n * n + k] = -gp_n;
            for d in 0..dim {
                let mut force = 0.0;
                for a in 0..dim {
                    force += j[a * n + k] * tidal[a * dim + d];
                }
                dp[d * n + k] -= force;
            }
        }
        if self.with_quadrature {
            dy[2 + 2 * block] = self.density(y);
        }
        Ok(())
    }
}

/// Orthonormal basis of `v^⊥` as columns, oriented so that
/// `det[e_1, …, e_N, v] = +1`.
pub(crate) fn complement_basis(v: &[f64]) -> DMatrix<f64> {
    let dim = v.len();
    let mut m = DMatrix::zeros(dim, dim);
    m.set_column(0, &nalgebra::DVector::from_column_slice(v));
    // Complete v with the coordinate axes least aligned with it.
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()));
    for (col, &axis) in order.iter().take(dim - 1).enumerate() {
        m[(axis, col + 1)] = 1.0;
    }
    let q = m.qr().q();
    let mut basis = DMatrix::zeros(dim, dim - 1);
    for k in 1..dim {
        basis.set_column(k - 1, &q.column(k));
    }
    let mut full = DMatrix::zeros(dim, dim);
    for k in 0..dim - 1 {
        full.set_column(k, &basis.column(k));
    }
    full.set_column(dim - 1, &nalgebra::DVector::from_column_slice(v));
    if full.determinant() < 0.0 {
        let flipped = -basis.column(0);
        basis.set_column(0, &flipped);
    }
    basis
}

fn check_unit(p: &MetricParams, v: &[f64]) -> Result<()> {
    check_dim(p.dim(), v.len())?;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() <= 1e-10) {
        return Err(Error::InvalidArgument(format!("direction must be a unit frame vector, |v| = {norm}")));
    }
    if p.n() > 16 {
        return Err(Error::InvalidArgument("Jacobi propagation supports N ≤ 16".into()));
    }
    Ok(())
}

/// Signed polar volume density `det[J_1, …, J_N, u](t)` along `exp(s v)`.
pub fn jacobi_volume_density(p: &MetricParams, v: &[f64], t: f64, cfg: &IntegratorConfig) -> Result<f64> {
    check_unit(p, v)?;
    cfg.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("t must be finite and ≥ 0, got {t}")));
    }
    let tensor = CurvatureTensor::new(p);
    let c = v[..p.n()].to_vec();
    let sys = JacobiSystem::new(p, &c, &tensor);
    let mut y = sys.initial_state(v);
    let mut ws = Dopri5::new(sys.dim());
    ws.integrate(&sys, 0.0, &mut y, t, cfg, |_| Control::Continue)?;
    Ok(sys.density(&y))
}

/// `∫_0^ρ max(density, 0) dt` along `exp(s v)`, stopping at the first sign
/// change of the density. Returns the integral and the conjugate time if one
/// was met.
pub fn radial_density_integral(
    p: &MetricParams,
    tensor: &CurvatureTensor,
    v: &[f64],
    rho: f64,
    cfg: &IntegratorConfig,
    ws: Option<&mut Dopri5>,
) -> Result<(f64, Option<f64>)> {
    check_unit(p, v)?;
    let c = v[..p.n()].to_vec();
    let mut sys = JacobiSystem::new(p, &c, tensor);
    sys.with_quadrature = true;
    let dim = sys.dim();
    let mut y = sys.initial_state(v);
    let mut own;
    let ws = match ws {
        Some(ws) => ws,
        None => {
            own = Dopri5::new(dim);
            &mut own
        }
    };
    let mut crossing: Option<(f64, f64)> = None;
    let mut buf = vec![0.0; dim];
    ws.integrate(&sys, 0.0, &mut y, rho, cfg, |step: &DenseStep<'_>| {
        let start_density = sys.density(step.y_old());
        step.eval(step.t_new(), &mut buf);
        let end_density = sys.density(&buf);
        // The density starts at 0 and is positive immediately after.
        if step.t_old > 0.0 && start_density > 0.0 && end_density <= 0.0 {
            let (mut lo, mut hi) = (step.t_old, step.t_new());
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                step.eval(mid, &mut buf);
                if sys.density(&buf) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            step.eval(lo, &mut buf);
            crossing = Some((lo, buf[dim - 1]));
            return Control::Stop;
        }
        Control::Continue
    })?;
    match crossing {
        Some((time, integral)) => Ok((integral, Some(time))),
        None => Ok((y[dim - 1], None)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: &[f64]) -> MetricParams {
        MetricParams::from_slice(a).unwrap()
    }

    #[test]
    fn complement_orientation() {
        for v in [vec![0.0, 0.0, 1.0], vec![0.6, 0.0, -0.8], vec![0.5, 0.5, 0.5, 0.5]] {
            let b = complement_basis(&v);
            let dim = v.len();
            let mut full = DMatrix::zeros(dim, dim);
            for k in 0..dim - 1 {
                full.set_column(k, &b.column(k));
            }
            full.set_column(dim - 1, &nalgebra::DVector::from_column_slice(&v));
            assert!((full.determinant() - 1.0).abs() < 1e-12);
            assert!((full.transpose() * &full - DMatrix::identity(dim, dim)).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_curvature_density() {
        let p = params(&[1.0, 1.0]);
        let v = [0.48, -0.6, 0.64];
        let cfg = IntegratorConfig::default();
        for t in [0.5, 2.0, 4.0] {
            let got = jacobi_volume_density(&p, &v, t, &cfg).unwrap();
            let want = t.sinh().powi(2);
            assert!((got / want - 1.0).abs() < 1e-7, "t={t}: {got} vs {want}");
        }
    }

    #[test]
    fn small_t_is_euclidean() {
        let p = params(&[1.0, -2.0, 0.5]);
        let v = [0.5, 0.5, 0.5, 0.5];
        let t = 1e-4;
        let d = jacobi_volume_density(&p, &v, t, &IntegratorConfig::default()).unwrap();
        assert!((d / t.powi(3) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_unit_direction() {
        let p = params(&[1.0]);
        assert!(jacobi_volume_density(&p, &[1.0, 1.0], 1.0, &IntegratorConfig::default()).is_err());
    }
}
