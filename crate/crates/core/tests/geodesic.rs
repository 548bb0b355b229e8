//! Geodesic integrator against an independent fixed-step RK4 on the full
//! second-order Euler–Lagrange system, plus conservation, monotonicity and
//! reversibility properties.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use solvgeo_core::geodesic::{flow, geodesic_rhs};
use solvgeo_core::hyperbolic::log_model_distance;
use solvgeo_core::rng::random_unit;
use solvgeo_core::{exp_map, trace, IntegratorConfig, MetricParams, Tangent};

/// `ẍ_i = 2 a_i ẋ_{N+1} ẋ_i`, `ẍ_{N+1} = −Σ a_i e^{−2 a_i x_{N+1}} ẋ_i²`.
fn euler_lagrange(a: &[f64], y: &[f64]) -> Vec<f64> {
    let dim = a.len() + 1;
    let (x, v) = y.split_at(dim);
    let h = x[a.len()];
    let hdot = v[a.len()];
    let mut out = v.to_vec();
    for (i, &ai) in a.iter().enumerate() {
        out.push(2.0 * ai * hdot * v[i]);
    }
    out.push(-a.iter().enumerate().map(|(i, &ai)| ai * (-2.0 * ai * h).exp() * v[i] * v[i]).sum::<f64>());
    out
}

fn rk4_endpoint(a: &[f64], v: &[f64], t: f64, steps: usize) -> Vec<f64> {
    let mut y: Vec<f64> = vec![0.0; a.len() + 1];
    y.extend_from_slice(v);
    let dt = t / steps as f64;
    let axpy = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    for _ in 0..steps {
        let k1 = euler_lagrange(a, &y);
        let k2 = euler_lagrange(a, &axpy(&y, &k1, dt / 2.0));
        let k3 = euler_lagrange(a, &axpy(&y, &k2, dt / 2.0));
        let k4 = euler_lagrange(a, &axpy(&y, &k3, dt));
        for i in 0..y.len() {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y.truncate(a.len() + 1);
    y
}

#[test]
fn endpoints_match_euler_lagrange_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = IntegratorConfig::with_tolerance(1e-12);
    for a in [vec![1.0], vec![1.0, -1.0], vec![1.0, 2.0, -3.0], vec![0.5, 0.0]] {
        let p = MetricParams::new(a.clone()).unwrap();
        for _ in 0..5 {
            let v = random_unit(&mut rng, p.dim());
            let end = exp_map(&p, &Tangent::at_origin(&p, v.clone()).unwrap(), 3.0, &cfg).unwrap();
            let oracle = rk4_endpoint(&a, &v, 3.0, 20_000);
            for (x, y) in end.x.coords().iter().zip(&oracle) {
                assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0), "a = {a:?}, v = {v:?}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn rhs_matches_euler_lagrange() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let a = [1.0, 2.0, -3.0];
    let p = MetricParams::new(a.to_vec()).unwrap();
    let cfg = IntegratorConfig::default();
    for _ in 0..10 {
        let v = random_unit(&mut rng, 4);
        let state = exp_map(&p, &Tangent::at_origin(&p, v).unwrap(), 0.7, &cfg).unwrap();
        let (vel, acc) = geodesic_rhs(&p, &state).unwrap();
        let mut y = state.x.coords().to_vec();
        y.extend_from_slice(&state.xdot);
        let oracle = euler_lagrange(&a, &y);
        let got: Vec<f64> = vel.into_iter().chain(acc).collect();
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() <= 1e-12 * o.abs().max(1.0), "{g} vs {o}");
        }
    }
}

#[test]
fn unit_speed_and_first_integrals_over_length_twenty() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cfg = IntegratorConfig::with_tolerance(1e-10);
    for a in [vec![1.0, -1.0], vec![1.0, 2.0, -3.0]] {
        let p = MetricParams::new(a).unwrap();
        for _ in 0..100 {
            let v = random_unit(&mut rng, p.dim());
            let states = trace(&p, &Tangent::at_origin(&p, v.clone()).unwrap(), 20.0, 0.25, &cfg).unwrap();
            for s in &states {
                assert!((s.speed_squared(&p) - 1.0).abs() < 1e-8, "speed at s = {}", s.s);
                for (c, c0) in s.recomputed_constants(&p).iter().zip(&v) {
                    assert!((c - c0).abs() < 1e-8);
                }
            }
        }
    }
}

fn same_sign_rates() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2..2.5f64, 1..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn vertical_speed_is_monotone(a in same_sign_rates(), negate in any::<bool>(), seed in any::<u64>()) {
        let a: Vec<f64> = if negate { a.iter().map(|v| -v).collect() } else { a };
        let p = MetricParams::new(a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_unit(&mut rng, p.dim());
        let states = trace(&p, &Tangent::at_origin(&p, v).unwrap(), 6.0, 0.05, &IntegratorConfig::default()).unwrap();
        let n = p.n();
        for w in states.windows(2) {
            let delta = w[1].xdot[n] - w[0].xdot[n];
            if negate {
                prop_assert!(delta >= -1e-9, "decrease {delta}");
            } else {
                prop_assert!(delta <= 1e-9, "increase {delta}");
            }
        }
    }

    #[test]
    fn forward_then_backward_returns(
        a in prop::collection::vec(prop_oneof![-2.0..-0.2f64, 0.2..2.0f64], 1..=3),
        seed in any::<u64>(),
        length in 0.5..6.0f64,
    ) {
        let p = MetricParams::new(a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_unit(&mut rng, p.dim());
        let cfg = IntegratorConfig::default();
        let end = exp_map(&p, &Tangent::at_origin(&p, v).unwrap(), length, &cfg).unwrap();
        let back = flow(&p, &end, -length, &cfg).unwrap();
        for x in back.x.coords() {
            prop_assert!(x.abs() <= 1e-6, "{x}");
        }
    }

    #[test]
    fn single_rate_lengths_match_log_model(rate in 0.3..2.5f64, n in 1usize..=3, seed in any::<u64>(), t in 0.1..4.0f64) {
        let p = MetricParams::new(vec![rate; n]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_unit(&mut rng, p.dim());
        let end = exp_map(&p, &Tangent::at_origin(&p, v).unwrap(), t, &IntegratorConfig::default()).unwrap();
        let gap = end.x.coords()[..n].iter().map(|x| x * x).sum::<f64>().sqrt();
        let d = log_model_distance(rate, gap, 0.0, end.height());
        prop_assert!((d - t).abs() <= 1e-8 * t.max(1.0), "{d} vs {t}");
    }
}
