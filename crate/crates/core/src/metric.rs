//! Pointwise geometry of `g_a`: inner products, the volume element, the
//! Levi-Civita connection in the left-invariant frame and the curvature
//! tensor built from it.
//!
//! Index convention: frame indices run over `0..=N`, with `N` the vertical
//! direction `E_{N+1}`. All frame quantities are constant because the metric
//! is left-invariant, so curvature is evaluated once and reused everywhere.

use crate::error::{check_dim, Error, Result};
use crate::params::{MetricParams, Point, Tangent};

/// `g_a(v, w)` at `pt` from coordinate components.
pub fn metric_inner(p: &MetricParams, pt: &Point, v: &Tangent, w: &Tangent) -> Result<f64> {
    pt.check(p)?;
    if v.base() != pt || w.base() != pt {
        return Err(Error::InvalidArgument("tangent vectors must be based at the evaluation point".into()));
    }
    coord_inner(p, pt.height(), v.coord(), w.coord())
}

/// `Σ e^{-2 a_i h} v_i w_i + v_{N+1} w_{N+1}` for coordinate components at
/// height `h`.
pub fn coord_inner(p: &MetricParams, height: f64, v: &[f64], w: &[f64]) -> Result<f64> {
    check_dim(p.dim(), v.len())?;
    check_dim(p.dim(), w.len())?;
    let n = p.n();
    let horizontal: f64 = p
        .rates()
        .iter()
        .zip(v.iter().zip(w))
        .map(|(a, (vi, wi))| (-2.0 * a * height).exp() * vi * wi)
        .sum();
    Ok(horizontal + v[n] * w[n])
}

/// Density of the Riemannian volume element with respect to Lebesgue measure,
/// `e^{-Σ a_i x_{N+1}}`.
pub fn volume_density(p: &MetricParams, pt: &Point) -> Result<f64> {
    pt.check(p)?;
    Ok(volume_density_at_height(p, pt.height()))
}

#[inline]
pub fn volume_density_at_height(p: &MetricParams, height: f64) -> f64 {
    (-p.trace() * height).exp()
}

/// Christoffel symbols in the orthonormal frame: `∇_{E_i} E_j = Σ_k Γ^k_{ij} E_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    dim: usize,
    coeffs: Vec<f64>,
}

impl Connection {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Γ^k_{ij}`.
    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.coeffs[(k * self.dim + i) * self.dim + j]
    }

    /// Nested `[k][i][j]` copy.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.dim)
            .map(|k| (0..self.dim).map(|i| (0..self.dim).map(|j| self.get(k, i, j)).collect()).collect())
            .collect()
    }
}

/// `∇_{E_i}E_j = a_i δ_ij E_{N+1}`, `∇_{E_i}E_{N+1} = -a_i E_i`, and the
/// vertical field is parallel along itself and annihilates horizontal fields.
pub fn connection_coefficients(p: &MetricParams) -> Connection {
    let dim = p.dim();
    let vert = p.n();
    let mut coeffs = vec![0.0; dim * dim * dim];
    let idx = |k: usize, i: usize, j: usize| (k * dim + i) * dim + j;
    for (i, &a) in p.rates().iter().enumerate() {
        coeffs[idx(vert, i, i)] = a;
        coeffs[idx(i, i, vert)] = -a;
    }
    Connection { dim, coeffs }
}

/// Frame components `R_{abcd} = ⟨R(E_a, E_b) E_c, E_d⟩` with
/// `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_{[X,Y]} Z`, so that the sectional
/// curvature of an orthonormal pair is `R(X, Y, Y, X)`.
#[derive(Debug, Clone)]
pub struct CurvatureTensor {
    dim: usize,
    dense: Vec<f64>,
    /// Nonzero entries as `(a, b, c, d, value)`.
    support: Vec<(usize, usize, usize, usize, f64)>,
}

impl CurvatureTensor {
    pub fn new(p: &MetricParams) -> Self {
        let conn = connection_coefficients(p);
        let dim = p.dim();
        let mut dense = vec![0.0; dim.pow(4)];
        let mut support = Vec::new();
        for a in 0..dim {
            for b in 0..dim {
                for c in 0..dim {
                    for d in 0..dim {
                        let mut r = 0.0;
                        for e in 0..dim {
                            let bracket = conn.get(e, a, b) - conn.get(e, b, a);
                            r += conn.get(e, b, c) * conn.get(d, a, e)
                                - conn.get(e, a, c) * conn.get(d, b, e)
                                - bracket * conn.get(d, e, c);
                        }
                        dense[((a * dim + b) * dim + c) * dim + d] = r;
                        if r != 0.0 {
                            support.push((a, b, c, d, r));
                        }
                    }
                }
            }
        }
        Self { dim, dense, support }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn component(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.dense[((a * self.dim + b) * self.dim + c) * self.dim + d]
    }

    pub fn support(&self) -> &[(usize, usize, usize, usize, f64)] {
        &self.support
    }

    /// `R(X, Y, Z, W)` for frame-component vectors.
    pub fn eval(&self, x: &[f64], y: &[f64], z: &[f64], w: &[f64]) -> Result<f64> {
        for v in [x, y, z, w] {
            check_dim(self.dim, v.len())?;
        }
        Ok(self.support.iter().map(|&(a, b, c, d, r)| r * x[a] * y[b] * z[c] * w[d]).sum())
    }

    /// Frame components of the vector `R(X, Y) Z`.
    pub fn apply(&self, x: &[f64], y: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        for v in [x, y, z] {
            check_dim(self.dim, v.len())?;
        }
        let mut out = vec![0.0; self.dim];
        for &(a, b, c, d, r) in &self.support {
            out[d] += r * x[a] * y[b] * z[c];
        }
        Ok(out)
    }

    /// The symmetric matrix `M_{ad} = R(E_a, u, u, E_d)`, so that the frame
    /// components of `R(J, u) u` are `Σ_a J_a M_{ad}`.
    pub fn tidal_matrix_into(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim * self.dim);
        out.fill(0.0);
        for &(a, b, c, d, r) in &self.support {
            out[a * self.dim + d] += r * u[b] * u[c];
        }
    }
}

/// `R(X, Y, Z, W)` for frame-component vectors.
pub fn curvature_tensor(p: &MetricParams, x: &[f64], y: &[f64], z: &[f64], w: &[f64]) -> Result<f64> {
    CurvatureTensor::new(p).eval(x, y, z, w)
}

/// Orthonormal basis `(P', Y)` of `span{P, Q}` with `Y` horizontal.
fn adapted_basis(pv: &[f64], qv: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let pp = dot(pv, pv);
    let qq = dot(qv, qv);
    let pq = dot(pv, qv);
    let gram = pp * qq - pq * pq;
    if !(gram > 1e-24 * pp * qq) {
        return Err(Error::DegeneratePlane);
    }
    let vert = pv.len() - 1;
    let (pn, qn) = (pv[vert], qv[vert]);
    // A horizontal vector of the plane: Q_n P - P_n Q, or P itself when the
    // whole plane is horizontal.
    let mut y: Vec<f64> = if pn == 0.0 && qn == 0.0 {
        pv.to_vec()
    } else {
        pv.iter().zip(qv).map(|(p, q)| qn * p - pn * q).collect()
    };
    y[vert] = 0.0;
    let ny = dot(&y, &y).sqrt();
    y.iter_mut().for_each(|v| *v /= ny);
    let residual = |v: &[f64]| -> Vec<f64> {
        let c = dot(v, &y);
        v.iter().zip(&y).map(|(a, b)| a - c * b).collect()
    };
    let rp = residual(pv);
    let rq = residual(qv);
    let mut x = if dot(&rp, &rp) / pp >= dot(&rq, &rq) / qq { rp } else { rq };
    let nx = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nx);
    Ok((x, y))
}

/// Sectional curvature of `span{P, Q}` (frame components).
///
/// The plane is rewritten in an orthonormal basis `{λ E_{N+1} + μ X, Y}` with
/// `X ⟂ Y` horizontal unit vectors, where
/// `κ = −λ² Σ a_i² Y_i² − μ² (Σ a_i X_i² · Σ a_i Y_i² − (Σ a_i X_i Y_i)²)`.
pub fn sectional_curvature(p: &MetricParams, pv: &[f64], qv: &[f64]) -> Result<f64> {
    check_dim(p.dim(), pv.len())?;
    check_dim(p.dim(), qv.len())?;
    let (xp, y) = adapted_basis(pv, qv)?;
    let n = p.n();
    let lambda = xp[n];
    let a = p.rates();
    let mut ay2 = 0.0;
    let mut a2y2 = 0.0;
    let mut ax2 = 0.0;
    let mut axy = 0.0;
    for i in 0..n {
        ay2 += a[i] * y[i] * y[i];
        a2y2 += a[i] * a[i] * y[i] * y[i];
        // xp[i] = μ X_i; the μ² factor is absorbed by homogeneity.
        ax2 += a[i] * xp[i] * xp[i];
        axy += a[i] * xp[i] * y[i];
    }
    Ok(-lambda * lambda * a2y2 - (ax2 * ay2 - axy * axy))
}

/// Sectional curvature from the full tensor, `R(P,Q,Q,P) / |P ∧ Q|²`.
pub fn sectional_curvature_from_tensor(tensor: &CurvatureTensor, pv: &[f64], qv: &[f64]) -> Result<f64> {
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let gram = dot(pv, pv) * dot(qv, qv) - dot(pv, qv).powi(2);
    if !(gram > 1e-24 * dot(pv, pv) * dot(qv, qv)) {
        return Err(Error::DegeneratePlane);
    }
    Ok(tensor.eval(pv, qv, qv, pv)? / gram)
}

/// `(lower, upper)` bounds on the sectional curvature. Zero rates take part
/// in the extremes `M = max a_i`, `m = min a_i`.
pub fn curvature_bounds(p: &MetricParams) -> (f64, f64) {
    let a = p.rates();
    let mixed = a.iter().any(|&v| v > 0.0) && a.iter().any(|&v| v < 0.0);
    let (big, small) = (p.max(), p.min());
    if mixed {
        (-(big * big).max(small * small), -big * small)
    } else {
        let sq_max = a.iter().map(|v| v * v).fold(0.0, f64::max);
        let sq_min = a.iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
        (-sq_max, -sq_min)
    }
}

/// `|Σa_iX_i²·Σa_iY_i² − (Σa_iX_iY_i)² − Σ_{i<j} a_i a_j (X_iY_j − X_jY_i)²|`.
pub fn wedge_identity_residual(a: &[f64], x: &[f64], y: &[f64]) -> Result<f64> {
    let (lhs, rhs) = wedge_identity_sides(a, x, y)?;
    Ok((lhs - rhs).abs())
}

/// Both sides of the wedge identity, evaluated independently.
pub fn wedge_identity_sides(a: &[f64], x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_dim(a.len(), x.len())?;
    check_dim(a.len(), y.len())?;
    let sum = |f: &dyn Fn(usize) -> f64| (0..a.len()).map(f).sum::<f64>();
    let ax2 = sum(&|i| a[i] * x[i] * x[i]);
    let ay2 = sum(&|i| a[i] * y[i] * y[i]);
    let axy = sum(&|i| a[i] * x[i] * y[i]);
    let lhs = ax2 * ay2 - axy * axy;
    let mut rhs = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let w = x[i] * y[j] - x[j] * y[i];
            rhs += a[i] * a[j] * w * w;
        }
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: &[f64]) -> MetricParams {
        MetricParams::from_slice(a).unwrap()
    }

    fn unit(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn inner_product_examples() {
        let p = params(&[1.0, -1.0]);
        let origin = Point::origin(3);
        let e1 = Tangent::from_coord(&p, origin.clone(), vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(metric_inner(&p, &origin, &e1, &e1).unwrap(), 1.0);

        let up = Point::new(vec![0.0, 0.0, 1.0]).unwrap();
        let e1 = Tangent::from_coord(&p, up.clone(), vec![1.0, 0.0, 0.0]).unwrap();
        let e3 = Tangent::from_coord(&p, up.clone(), vec![0.0, 0.0, 1.0]).unwrap();
        assert!((metric_inner(&p, &up, &e1, &e1).unwrap() - (-2.0f64).exp()).abs() < 1e-16);
        assert_eq!(metric_inner(&p, &up, &e3, &e3).unwrap(), 1.0);
        assert!(metric_inner(&p, &origin, &e1, &e1).is_err());
    }

    #[test]
    fn volume_density_examples() {
        let pt = |h: f64| Point::new(vec![0.3, -0.7, h]).unwrap();
        assert_eq!(volume_density(&params(&[1.0, -1.0]), &pt(5.0)).unwrap(), 1.0);
        assert!((volume_density(&params(&[1.0, 1.0]), &pt(1.0)).unwrap() - (-2.0f64).exp()).abs() < 1e-16);
        assert_eq!(volume_density(&params(&[2.0, 3.0]), &pt(0.0)).unwrap(), 1.0);
        assert!(volume_density(&params(&[1.0]), &pt(0.0)).is_err());
    }

    #[test]
    fn connection_examples() {
        let g = connection_coefficients(&params(&[1.0, -1.0])).to_nested();
        assert_eq!(g[2][0][0], 1.0);
        assert_eq!(g[2][1][1], -1.0);
        assert_eq!(g[0][0][2], -1.0);
        assert_eq!(g[1][1][2], 1.0);
        for k in 0..3 {
            for j in 0..3 {
                assert_eq!(g[k][2][j], 0.0);
            }
        }
        let nonzero = g.iter().flatten().flatten().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 4);
    }

    #[test]
    fn connection_is_metric() {
        let conn = connection_coefficients(&params(&[0.7, -1.3, 2.0]));
        let d = conn.dim();
        for i in 0..d {
            for j in 0..d {
                for l in 0..d {
                    assert_eq!(conn.get(l, i, j) + conn.get(j, i, l), 0.0);
                }
            }
        }
    }

    #[test]
    fn curvature_tensor_examples() {
        let p = params(&[1.0, -1.0]);
        let (e1, e2, e3) = (unit(3, 0), unit(3, 1), unit(3, 2));
        assert_eq!(curvature_tensor(&p, &e1, &e3, &e3, &e1).unwrap(), -1.0);
        assert_eq!(curvature_tensor(&p, &e1, &e2, &e2, &e1).unwrap(), 1.0);
        let x = [0.3, -1.2, 0.5];
        let w = [1.0, 2.0, -0.4];
        assert_eq!(curvature_tensor(&p, &x, &x, &e2, &w).unwrap(), 0.0);
    }

    #[test]
    fn sectional_examples() {
        let p = params(&[1.0, -2.0]);
        let (e1, e2, e3) = (unit(3, 0), unit(3, 1), unit(3, 2));
        assert_eq!(sectional_curvature(&p, &e2, &e3).unwrap(), -4.0);
        assert_eq!(sectional_curvature(&p, &e1, &e2).unwrap(), 2.0);
        let hyp = params(&[1.5, 1.5, 1.5]);
        let k = sectional_curvature(&hyp, &[0.2, -0.4, 1.0, 0.3], &[1.0, 0.5, 0.0, -2.0]).unwrap();
        assert!((k + 2.25).abs() < 1e-12);
        assert!(matches!(sectional_curvature(&p, &e1, &[2.0, 0.0, 0.0]), Err(Error::DegeneratePlane)));
    }

    #[test]
    fn sectional_routes_agree() {
        let p = params(&[1.0, -2.0, 0.5]);
        let t = CurvatureTensor::new(&p);
        let pv = [0.3, -0.8, 0.1, 0.6];
        let qv = [-1.1, 0.2, 0.9, 0.4];
        let a = sectional_curvature(&p, &pv, &qv).unwrap();
        let b = sectional_curvature_from_tensor(&t, &pv, &qv).unwrap();
        assert!((a - b).abs() < 1e-13, "{a} vs {b}");
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(curvature_bounds(&params(&[1.0, 2.0])), (-4.0, -1.0));
        assert_eq!(curvature_bounds(&params(&[1.0, -2.0])), (-4.0, 2.0));
        assert_eq!(curvature_bounds(&params(&[0.5, 0.5])), (-0.25, -0.25));
        assert_eq!(curvature_bounds(&params(&[1.0, 0.0])), (-1.0, 0.0));
        assert_eq!(curvature_bounds(&params(&[0.0])), (0.0, 0.0));
    }

    #[test]
    fn wedge_examples() {
        let (lhs, rhs) = wedge_identity_sides(&[2.0, -3.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!((lhs, rhs), (-6.0, -6.0));
        let x = [0.4, 1.0, -2.0];
        assert_eq!(wedge_identity_residual(&[1.0, 2.0, 3.0], &x, &x).unwrap(), 0.0);
        assert!(wedge_identity_residual(&[1.0], &[1.0, 2.0], &[1.0]).is_err());
    }
}
