//! Deterministic random and quasi-random streams.
//!
//! Every Monte Carlo sample draws from its own ChaCha8 stream keyed by
//! `(seed, sample index)`, so results do not depend on how samples are
//! distributed over worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Generator for sample `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base as u64) as f64 * factor;
        index /= base as u64;
        factor *= inv;
    }
    out
}

/// Point `index` of the `dim`-dimensional Halton sequence with a
/// Cranley–Patterson rotation `shift`, in `[0, 1)^dim`.
pub fn shifted_halton(index: u64, shift: &[f64]) -> Vec<f64> {
    assert!(shift.len() <= PRIMES.len(), "Halton dimension limited to {}", PRIMES.len());
    shift.iter().zip(PRIMES).map(|(s, b)| (radical_inverse(index + 1, b) + s).fract()).collect()
}

/// `count` low-discrepancy unit vectors in `ℝ^dim` (points of `S^{dim−1}`).
///
/// On the circle the points are equispaced with a seeded phase; in higher
/// dimension a rotated Halton sequence is pushed through the inverse normal
/// CDF and normalised.
pub fn sphere_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim >= 2, "spheres need an ambient dimension of at least 2");
    let mut rng = stream(seed, u64::MAX);
    if dim == 2 {
        let phase: f64 = rng.random::<f64>();
        return (0..count)
            .map(|k| {
                let angle = std::f64::consts::TAU * (k as f64 + phase) / count as f64;
                vec![angle.cos(), angle.sin()]
            })
            .collect();
    }
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let normal = Normal::standard();
    (0..count as u64)
        .map(|k| {
            let u = shifted_halton(k, &shift);
            let mut v: Vec<f64> = u.iter().map(|&ui| normal.inverse_cdf(ui.clamp(1e-300, 1.0 - 1e-16))).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            v
        })
        .collect()
}

/// A uniformly distributed unit vector in `ℝ^dim`.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
