#![allow(dead_code)]

use mgd_core::{LowRankGaussian, Matrix, SeededRng};

/// Seeded instance with standard-normal μ and Ψ entries and σ in [0.2, 1.5).
pub fn random_gaussian(n: usize, m: usize, rng: &mut SeededRng) -> LowRankGaussian<f64> {
    let mu = rng.normal_vec(n);
    let psi = Matrix::from_vec(n, m, rng.normal_vec(n * m)).unwrap();
    LowRankGaussian::new(mu, psi, rng.uniform_in(0.2, 1.5)).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
