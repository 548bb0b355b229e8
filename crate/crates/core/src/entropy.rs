//! Volume entropy: closed forms and the empirical slope of `log Vol(B(ρ))`.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ordered_sum, MetricParams};
use crate::volume::VolumeEstimate;

/// Eigenvalue real parts at or below this are not Heintze.
pub const HEINTZE_TOL: f64 = 1e-9;

/// Eigenvalues closer than this (relative to the matrix scale) are treated
/// as one repeated eigenvalue when testing diagonalizability.
const CLUSTER_TOL: f64 = 1e-6;

/// Default share of the upper `ρ` range used by [`entropy_fit`].
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.4;

/// `max(Σ_{a_i ≥ 0} a_i, Σ_{a_i < 0} |a_i|)`.
pub fn entropy_exact(p: &MetricParams) -> f64 {
    p.pos_sum().max(p.neg_sum())
}

/// Entropy along the family `a = (1, −α)` joining `ℍ³` (α = −1), `ℍ² × ℝ`
/// (α = 0) and SOL (α = 1).
pub fn sol_interpolation_entropy(alpha: f64) -> f64 {
    if alpha < 0.0 {
        1.0 - alpha
    } else if alpha <= 1.0 {
        1.0
    } else {
        alpha
    }
}

fn square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return Err(Error::InvalidArgument(format!("expected a nonempty square matrix, got {}×{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    Ok(())
}

/// Rejects matrices with an eigenvalue whose geometric multiplicity falls
/// short of its algebraic one.
fn check_diagonalizable(m: &DMatrix<f64>, eigen: &[Complex<f64>]) -> Result<()> {
    let dim = m.nrows();
    let scale = m.norm().max(1.0);
    let complex = m.map(|v| Complex::new(v, 0.0));
    let mut seen = vec![false; eigen.len()];
    for i in 0..eigen.len() {
        if seen[i] {
            continue;
        }
        let cluster: Vec<usize> = (i..eigen.len()).filter(|&j| (eigen[j] - eigen[i]).norm() <= CLUSTER_TOL * scale).collect();
        cluster.iter().for_each(|&j| seen[j] = true);
        if cluster.len() == 1 {
            continue;
        }
        let lambda = cluster.iter().map(|&j| eigen[j]).sum::<Complex<f64>>() / cluster.len() as f64;
        let shifted = &complex - DMatrix::from_diagonal_element(dim, dim, lambda);
        let singular = shifted.singular_values();
        let nullity = singular.iter().filter(|&&s| s <= CLUSTER_TOL * scale).count();
        if nullity < cluster.len() {
            return Err(Error::Defective(lambda.re));
        }
    }
    Ok(())
}

fn is_triangular(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let upper = (0..n).all(|i| (0..i).all(|j| m[(i, j)] == 0.0));
    let lower = (0..n).all(|i| (i + 1..n).all(|j| m[(i, j)] == 0.0));
    upper || lower
}

/// Entropy of the Heintze group `G(A)`: the sum of the real parts of the
/// eigenvalues of `A`, after checking that `A` is diagonalizable with every
/// real part positive.
pub fn heintze_entropy(a: &DMatrix<f64>) -> Result<f64> {
    square(a)?;
    let eigen: Vec<Complex<f64>> = if is_triangular(a) {
        a.diagonal().iter().map(|&d| Complex::new(d, 0.0)).collect()
    } else {
        a.complex_eigenvalues().iter().copied().collect()
    };
    if let Some(bad) = eigen.iter().map(|z| z.re).find(|&re| re <= HEINTZE_TOL) {
        return Err(Error::NotHeintze(bad));
    }
    check_diagonalizable(a, &eigen)?;
    Ok(ordered_sum(eigen.iter().map(|z| z.re)))
}

/// Entropy of the horospherical product `G(A) ⋈ G(B)`.
pub fn horospherical_product_entropy(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    Ok(heintze_entropy(a)?.max(heintze_entropy(b)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub rho_window: (f64, f64),
    pub points_used: usize,
    pub r_squared: f64,
    /// `(ρ, log Vol − fitted)` for each point in the window.
    pub residuals: Vec<(f64, f64)>,
}

/// Least-squares line through `(ρ, log Vol)` over the top `window_fraction`
/// of the `ρ` range.
pub fn fit_log_volume(points: &[(f64, f64)], window_fraction: f64) -> Result<EntropyFit> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Fit(format!("window fraction must lie in (0, 1], got {window_fraction}")));
    }
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 samples, got {}", points.len())));
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) || points.iter().any(|(r, _)| !r.is_finite()) {
        return Err(Error::Fit("ρ values must be finite and strictly increasing".into()));
    }
    let first = points[0].0;
    let last = points[points.len() - 1].0;
    let cut = last - window_fraction * (last - first);
    // Grid points equal to the cut up to rounding stay in the window.
    let slack = 1e-9 * (last - first);
    let window: Vec<(f64, f64)> = points.iter().copied().filter(|(r, _)| *r >= cut - slack).collect();
    if window.len() < 3 {
        return Err(Error::Fit(format!("only {} points in the fit window [{cut}, {last}]", window.len())));
    }
    if let Some((r, v)) = window.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Fit(format!("non-positive volume {v} at ρ = {r}")));
    }
    let count = window.len() as f64;
    let xs: Vec<f64> = window.iter().map(|(r, _)| *r).collect();
    let ys: Vec<f64> = window.iter().map(|(_, v)| v.ln()).collect();
    let mean_x = xs.iter().sum::<f64>() / count;
    let mean_y = ys.iter().sum::<f64>() / count;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let syy: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residuals: Vec<(f64, f64)> = xs.iter().zip(&ys).map(|(x, y)| (*x, y - (intercept + slope * x))).collect();
    let ssr: f64 = residuals.iter().map(|(_, e)| e * e).sum();
    let slope_std_error = (ssr / (count - 2.0) / sxx).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Ok(EntropyFit {
        slope,
        intercept,
        slope_std_error,
        rho_window: (xs[0], xs[xs.len() - 1]),
        points_used: window.len(),
        r_squared,
        residuals,
    })
}

/// [`fit_log_volume`] over volume estimates.
pub fn entropy_fit(samples: &[(f64, VolumeEstimate)], window_fraction: f64) -> Result<EntropyFit> {
    let points: Vec<(f64, f64)> = samples.iter().map(|(r, e)| (*r, e.value)).collect();
    fit_log_volume(&points, window_fraction)
}
