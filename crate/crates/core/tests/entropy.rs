//! Closed-form entropies and the log-volume slope fit.

use nalgebra::DMatrix;
use proptest::prelude::*;

use solvgeo_core::entropy::{
    entropy_exact, fit_log_volume, heintze_entropy, horospherical_product_entropy, sol_interpolation_entropy,
};
use solvgeo_core::hyperbolic::hyperbolic_ball_volume;
use solvgeo_core::MetricParams;

fn nonzero_rates() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![-4.0..-0.05f64, 0.05..4.0f64], 1..=6)
}

#[test]
fn sol_family_is_continuous_at_its_corners() {
    assert_eq!(sol_interpolation_entropy(0.0), 1.0 - 0.0);
    assert_eq!(sol_interpolation_entropy(1.0), 1.0f64.max(1.0));
    assert_eq!(sol_interpolation_entropy(-1.0), 2.0);
    assert_eq!(sol_interpolation_entropy(2.0), 2.0);
    for alpha in [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0] {
        let a = if alpha == 0.0 { vec![1.0, 0.0] } else { vec![1.0, -alpha] };
        assert_eq!(sol_interpolation_entropy(alpha), entropy_exact(&MetricParams::new(a).unwrap()));
    }
}

#[test]
fn horospherical_products_take_the_larger_factor() {
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
    let b = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
    assert_eq!(horospherical_product_entropy(&a, &b).unwrap(), 3.0);
    assert!(heintze_entropy(&(-b)).is_err());
}

#[test]
fn exact_hyperbolic_volumes_fit_their_rate() {
    let points: Vec<(f64, f64)> =
        (0..=10).map(|k| 4.0 + 0.5 * k as f64).map(|r| (r, hyperbolic_ball_volume(1.0, 2, r).unwrap())).collect();
    let fit = fit_log_volume(&points, 0.4).unwrap();
    assert!((fit.slope - 2.0).abs() < 0.01, "{fit:?}");
    assert!(fit.r_squared > 0.9999);
}

proptest! {
    #[test]
    fn exact_entropy_symmetries(a in nonzero_rates(), shift in 0usize..6) {
        let p = MetricParams::new(a.clone()).unwrap();
        let e = entropy_exact(&p);
        let negated: Vec<f64> = a.iter().map(|v| -v).collect();
        let mut rotated = a.clone();
        let k = shift % a.len();
        rotated.rotate_left(k);
        prop_assert_eq!(e, entropy_exact(&MetricParams::new(negated).unwrap()));
        prop_assert_eq!(e, entropy_exact(&MetricParams::new(rotated).unwrap()));
        let mut sorted = a.clone();
        sorted.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
        let pos: f64 = sorted.iter().filter(|&&v| v >= 0.0).sum();
        let neg: f64 = sorted.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
        prop_assert_eq!(e, pos.max(neg));
        prop_assert!(e <= a.iter().map(|v| v.abs()).sum::<f64>() * (1.0 + 1e-15));
    }

    #[test]
    fn heintze_matches_exact_on_diagonals(a in prop::collection::vec(0.05..4.0f64, 1..=6)) {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(a.clone()));
        let exact = entropy_exact(&MetricParams::new(a).unwrap());
        prop_assert_eq!(heintze_entropy(&m).unwrap(), exact);
    }

    #[test]
    fn exponentials_fit_exactly(rate in 0.1..3.0f64, offset in -5.0..5.0f64) {
        let points: Vec<(f64, f64)> = (0..12).map(|k| k as f64 * 0.5).map(|r| (r, (offset + rate * r).exp())).collect();
        let fit = fit_log_volume(&points, 0.5).unwrap();
        prop_assert!((fit.slope - rate).abs() < 1e-10);
        prop_assert!((fit.r_squared - 1.0).abs() < 1e-10);
    }
}
