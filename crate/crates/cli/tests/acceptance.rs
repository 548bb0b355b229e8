//! Acceptance criteria, one test each. Every test writes a single
//! `criterion N: PASS|FAIL ...` line straight to standard error, so the
//! lines show up in `cargo test` output even for passing tests.
//!
//! The command-line criteria drive the built `solvgeo` binary. They share a
//! volume cache under the target directory, so criteria 1 and 9 reuse each
//! other's α = 1 volumes and later runs are fast.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use solvgeo_core::distance::{Shooter, ShootingOptions};
use solvgeo_core::jacobi::jacobi_volume_density;
use solvgeo_core::metric::wedge_identity_sides;
use solvgeo_core::rng::random_unit;
use solvgeo_core::{trace, IntegratorConfig, MetricParams, Point, Tangent};

/// Serialises the long Monte Carlo criteria so that shared cache entries are
/// computed once.
static HEAVY: Mutex<()> = Mutex::new(());

fn cache_path() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cache.jsonl")
}

struct Run {
    status: i32,
    stdout: String,
    stderr: String,
}

fn solvgeo(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_solvgeo"))
        .args(args)
        .env("SOLVGEO_CACHE", cache_path())
        .output()
        .expect("solvgeo runs");
    Run {
        status: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn json(run: &Run) -> Value {
    serde_json::from_str(&run.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}\n{}", run.stdout, run.stderr))
}

fn report(number: u32, title: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {number:>2}: {verdict} {title}: {detail}");
    assert!(passed, "criterion {number} ({title}) failed: {detail}");
}

fn num(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for key in path {
        cur = &cur[*key];
    }
    cur.as_f64().unwrap_or_else(|| panic!("missing number at {path:?} in {v}"))
}

#[test]
fn criterion_01_sol_entropy_slope() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let run = solvgeo(&["entropy-fit", "--a", "1,-1", "--rho-grid", "4:9:0.5", "--method", "mc", "--samples", "2e5"]);
    let out = json(&run);
    let slope = num(&out, &["fit", "slope"]);
    let se = num(&out, &["fit", "slope_std_error"]);
    let passed = run.status == 0 && (0.85..=1.15).contains(&slope);
    report(1, "SOL entropy fit", passed, &format!("slope {slope:.4} ± {se:.4}, target [0.85, 1.15], exit {}", run.status));
}

#[test]
fn criterion_02_hyperbolic_plane_volumes() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let mut lines = Vec::new();
    let mut passed = true;
    for rho in [1.0f64, 2.0, 3.0] {
        let exact = 4.0 * std::f64::consts::PI * (rho / 2.0).sinh().powi(2);
        let rho_s = rho.to_string();
        let mc = json(&solvgeo(&["ball-volume", "--a", "1", "--rho", &rho_s, "--method", "mc", "--samples", "1e5"]));
        let pf = json(&solvgeo(&["ball-volume", "--a", "1", "--rho", &rho_s, "--method", "pushforward"]));
        let (mv, ms) = (num(&mc, &["estimate", "value"]), num(&mc, &["estimate", "std_error"]));
        let pv = num(&pf, &["estimate", "value"]);
        let mc_rel = (mv - exact).abs() / exact;
        let pf_rel = (pv - exact).abs() / exact;
        let ok = mc_rel <= 0.02 && (mv - exact).abs() <= 3.0 * ms && pf_rel <= 1e-6;
        passed &= ok;
        lines.push(format!("ρ={rho}: mc {:.2e} rel ({:.1}σ), pushforward {pf_rel:.1e} rel", mc_rel, (mv - exact).abs() / ms));
    }
    report(2, "hyperbolic plane volumes", passed, &lines.join("; "));
}

#[test]
fn criterion_03_plane_distance_oracle() {
    let p = MetricParams::new(vec![1.0]).unwrap();
    let shooter = Shooter::new(&p);
    let opts = ShootingOptions::for_params(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (x, h): (f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(-3.0..3.0));
        let d = shooter.distance(&Point::new(vec![x, h]).unwrap(), &opts).unwrap().value;
        // Half-plane model: z = (x, e^h), cosh d = 1 + |z − (0, 1)|² / (2 e^h).
        let y = h.exp();
        let expected = (1.0 + (x * x + (y - 1.0).powi(2)) / (2.0 * y)).acosh();
        worst = worst.max((d - expected).abs());
    }
    report(3, "distance oracle vs half-plane formula", worst < 1e-6, &format!("max abs error {worst:.2e} over 100 targets"));
}

#[test]
fn criterion_04_curvature_pinching() {
    let mixed = json(&solvgeo(&["curvature-scan", "--a", "1,-2", "--samples", "1e5"]));
    let same = json(&solvgeo(&["curvature-scan", "--a", "1,2", "--samples", "1e5"]));
    let (lo, hi) = (num(&mixed, &["min_seen"]), num(&mixed, &["max_seen"]));
    let mixed_ok = lo >= -4.0 - 1e-9 && hi <= 2.0 + 1e-9 && lo <= -4.0 + 1e-3 && hi >= 2.0 - 1e-3;
    let (slo, shi) = (num(&same, &["min_seen"]), num(&same, &["max_seen"]));
    let same_ok = slo >= -4.0 - 1e-9 && shi <= -1.0 + 1e-9;
    report(
        4,
        "curvature pinching",
        mixed_ok && same_ok,
        &format!("a=(1,−2): κ ∈ [{lo:.6}, {hi:.6}] vs [−4, 2]; a=(1,2): κ ∈ [{slo:.6}, {shi:.6}] vs [−4, −1]"),
    );
}

#[test]
fn criterion_05_conservation() {
    let cfg = IntegratorConfig::with_tolerance(1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut speed, mut integral): (f64, f64) = (0.0, 0.0);
    for a in [vec![1.0, -1.0], vec![1.0, 2.0, -3.0]] {
        let p = MetricParams::new(a).unwrap();
        for _ in 0..100 {
            let v = random_unit(&mut rng, p.dim());
            let states = trace(&p, &Tangent::at_origin(&p, v.clone()).unwrap(), 20.0, 0.1, &cfg).unwrap();
            for s in &states {
                speed = speed.max((s.speed_squared(&p) - 1.0).abs());
                for (c, c0) in s.recomputed_constants(&p).iter().zip(&v) {
                    integral = integral.max((c - c0).abs());
                }
            }
        }
    }
    let passed = speed < 1e-8 && integral < 1e-8;
    report(5, "conservation over arc-length 20", passed, &format!("speed drift {speed:.2e}, first-integral drift {integral:.2e}"));
}

#[test]
fn criterion_06_wedge_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for k in 0..1_000_000 {
        let dim = 2 + k % 5;
        let mut draw = || -> Vec<f64> { (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect() };
        let (a, x, y) = (draw(), draw(), draw());
        let (lhs, rhs) = wedge_identity_sides(&a, &x, &y).unwrap();
        let weight = |v: &[f64]| a.iter().zip(v).map(|(ai, vi)| ai.abs() * vi * vi).sum::<f64>();
        let scale = weight(&x) * weight(&y);
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    report(6, "wedge identity", worst < 1e-10, &format!("max relative residual {worst:.2e} over 10^6 draws"));
}

#[test]
fn criterion_07_jacobi_oracle() {
    let cfg = IntegratorConfig::with_tolerance(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for rate in [0.5f64, 1.0, 2.0] {
        for n in 1..=3 {
            let p = MetricParams::new(vec![rate; n]).unwrap();
            for _ in 0..5 {
                let v = random_unit(&mut rng, p.dim());
                for k in 1..=10 {
                    let t = 0.5 * k as f64;
                    let got = jacobi_volume_density(&p, &v, t, &cfg).unwrap();
                    let expected = ((rate * t).sinh() / rate).powi(n as i32);
                    worst = worst.max((got / expected - 1.0).abs());
                }
            }
        }
    }
    report(7, "Jacobi density vs (sinh(pt)/p)^N", worst < 1e-6, &format!("max relative error {worst:.2e}"));
}

#[test]
fn criterion_08_volume_sandwich() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let mut passed = true;
    let mut lines = Vec::new();
    for a in ["1,2", "1,-1"] {
        for rho in ["2", "3", "4", "5"] {
            let run = solvgeo(&["ball-volume", "--a", a, "--rho", rho, "--method", "mc", "--samples", "1e5"]);
            let out = json(&run);
            let v = num(&out, &["estimate", "value"]);
            let s = num(&out, &["estimate", "std_error"]);
            let (lo, hi) = (num(&out, &["bounds", "lower"]), num(&out, &["bounds", "upper"]));
            let ok = v + 3.0 * s >= lo && v - 3.0 * s <= hi && run.status == 0;
            passed &= ok;
            lines.push(format!("a=({a}) ρ={rho}: {lo:.3e} ≤ {v:.3e}±{s:.1e} ≤ {hi:.3e}{}", if ok { "" } else { " ✗" }));
        }
    }
    report(8, "volume sandwich", passed, &lines.join("; "));
}

#[test]
fn criterion_09_sol_interpolation_curve() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let run = solvgeo(&["sol-sweep", "--alpha", "-1:2:0.5", "--fit", "--rho-grid", "4:9:0.5", "--samples", "2e5"]);
    let mut reader = csv::Reader::from_reader(run.stdout.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.expect("CSV row");
        let parse = |i: usize| r[i].parse::<f64>().unwrap_or(f64::NAN);
        rows.push((parse(0), parse(1), parse(2), parse(3)));
    }
    let mut passed = run.status == 0 && rows.len() == 7;
    let mut lines = Vec::new();
    for &(alpha, exact, fitted, _) in &rows {
        let ok = (fitted - exact).abs() <= 0.15 * exact;
        passed &= ok;
        lines.push(format!("α={alpha}: {fitted:.3} vs {exact}{}", if ok { "" } else { " ✗" }));
    }
    // The fit window starts at ρ = 7. A polynomial prefactor ρ^k, |k| ≤ 1,
    // in front of e^{hρ} moves a finite-window slope by at most 1/7; that
    // systematic term joins the regression error in the flatness test.
    let systematic = 1.0 / 7.0;
    let plateau: Vec<_> = rows.iter().filter(|r| (0.0..=1.0).contains(&r.0)).collect();
    let mut spread_ok = plateau.len() == 3;
    let mut widest: f64 = 0.0;
    for i in 0..plateau.len() {
        for j in i + 1..plateau.len() {
            let u = |r: &(f64, f64, f64, f64)| r.3.hypot(systematic);
            let gap = (plateau[i].2 - plateau[j].2).abs();
            widest = widest.max(gap);
            spread_ok &= gap <= u(plateau[i]).hypot(u(plateau[j]));
        }
    }
    passed &= spread_ok;
    lines.push(format!("plateau spread {widest:.3} (allowed ≈ {:.3})", systematic * 2f64.sqrt()));
    report(9, "SOL interpolation curve", passed, &format!("{}; exit {}", lines.join(", "), run.status));
}

#[test]
fn criterion_10_projection_and_recursion() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let mut passed = true;
    let mut lines = Vec::new();
    for suite in ["projection", "recursion"] {
        let run = solvgeo(&["verify", "--suite", suite, "--a", "1,-1", "--rho", "3", "--samples", "1e3"]);
        let out = json(&run);
        let ok = run.status == 0 && out["passed"].as_bool() == Some(true);
        passed &= ok;
        let check = &out["checks"][0];
        let detail = match suite {
            "projection" => format!("{} violations", check["detail"]["violations"]),
            _ => format!("margin {:.1}σ", num(check, &["detail", "margin_sigmas"])),
        };
        lines.push(format!("{suite}: {detail}"));
    }
    report(10, "projection and recursion", passed, &lines.join("; "));
}
