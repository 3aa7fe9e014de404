//! Low-rank evaluation against the explicit dense covariance.

mod common;

use common::{max_abs_diff, random_gaussian};
use mgd_core::{LowRankGaussian, Matrix, SeededRng};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (LowRankGaussian<f64>, Vec<f64>)> {
    (1usize..=12, 0usize..=4, any::<u64>()).prop_map(|(n, m, seed)| {
        let mut rng = SeededRng::new(seed);
        let g = random_gaussian(n, m.min(n), &mut rng);
        let z = rng.normal_vec(n).iter().map(|v| 2.0 * v).collect();
        (g, z)
    })
}

proptest! {
    #[test]
    fn nll_matches_dense((g, z) in instance()) {
        let lr = g.nll(&z).unwrap();
        let dense = g.to_dense().nll(&z).unwrap();
        prop_assert!((lr - dense).abs() <= 1e-9, "{} vs {}", lr, dense);
    }

    #[test]
    fn log_det_matches_dense((g, _z) in instance()) {
        let lr = g.log_det().unwrap();
        let dense = g.to_dense().log_det().unwrap();
        prop_assert!((lr - dense).abs() <= 1e-9);
    }

    #[test]
    fn woodbury_residual((g, _z) in instance(), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let v: Vec<f64> = (0..g.n()).map(|_| rng.uniform_in(-10.0, 10.0)).collect();
        let x = g.solve(&v).unwrap();
        let back = g.to_dense().cov().matvec(&x).unwrap();
        prop_assert!(max_abs_diff(&back, &v) <= 1e-9);
    }

    #[test]
    fn minimum_at_mean((g, z) in instance()) {
        let at_mean = g.nll(g.mu()).unwrap();
        let n = g.n() as f64;
        let expected = 0.5 * (n * std::f64::consts::TAU.ln() + g.log_det().unwrap());
        prop_assert!((at_mean - expected).abs() <= 1e-9);
        prop_assert!(g.nll(&z).unwrap() >= at_mean - 1e-12);
    }

    #[test]
    fn dense_covariance_is_symmetric((g, _z) in instance()) {
        let cov = g.to_dense().cov().clone();
        prop_assert_eq!(cov.transpose(), cov);
    }

    #[test]
    fn covariance_rows_match_dense((g, _z) in instance()) {
        let dense = g.to_dense();
        for i in 0..g.n() {
            let row = g.covariance_row(i).unwrap();
            prop_assert!(max_abs_diff(&row, dense.cov().row(i)) <= 1e-12);
        }
    }
}

#[test]
fn diagonal_model_is_sum_of_univariate() {
    let mut rng = SeededRng::new(3);
    for _ in 0..20 {
        let n = 1 + rng.below(12);
        let sigma = rng.uniform_in(0.1, 2.0);
        let mu = rng.normal_vec(n);
        let z: Vec<f64> = rng.normal_vec(n);
        let g = LowRankGaussian::isotropic(mu.clone(), sigma).unwrap();
        let expected: f64 = mu
            .iter()
            .zip(&z)
            .map(|(m, x)| {
                0.5 * (std::f64::consts::TAU * sigma * sigma).ln()
                    + 0.5 * (x - m).powi(2) / (sigma * sigma)
            })
            .sum();
        assert!((g.nll(&z).unwrap() - expected).abs() <= 1e-10);
    }
}

#[test]
fn five_hundred_seeded_instances() {
    let mut rng = SeededRng::new(2024);
    for _ in 0..500 {
        let n = 1 + rng.below(12);
        let m = rng.below(5).min(n);
        let g = random_gaussian(n, m, &mut rng);
        let z: Vec<f64> = rng.normal_vec(n);
        assert!((g.nll(&z).unwrap() - g.to_dense().nll(&z).unwrap()).abs() <= 1e-9);
    }
}

#[test]
fn rotation_of_factor_leaves_nll_unchanged() {
    let mut rng = SeededRng::new(8);
    for _ in 0..20 {
        let g = random_gaussian(9, 3, &mut rng);
        // Orthogonal 3×3 from the eigenvectors of a random symmetric matrix.
        let b = Matrix::from_vec(3, 3, rng.normal_vec(9)).unwrap();
        let sym = b.add(&b.transpose()).unwrap();
        let rot = mgd_core::linalg::symmetric_eigen(&sym).unwrap().vectors;
        let rotated = g.with_psi(g.psi().matmul(&rot).unwrap()).unwrap();
        let z: Vec<f64> = rng.normal_vec(9);
        assert!((g.nll(&z).unwrap() - rotated.nll(&z).unwrap()).abs() <= 1e-10);
    }
}

#[test]
fn sample_mean_converges() {
    let n = 4;
    let c = 1.75;
    let sigma = 0.5;
    let g = LowRankGaussian::new(vec![c; n], Matrix::zeros(n, 2), sigma).unwrap();
    let draws = g.sample(&mut SeededRng::new(1), 100_000).unwrap();
    let tol = 5.0 * sigma / (100_000f64).sqrt();
    for i in 0..n {
        let mean = draws.iter().map(|d| d[i]).sum::<f64>() / draws.len() as f64;
        assert!((mean - c).abs() <= tol, "pixel {i}: {mean}");
    }
}

#[test]
fn sample_correlation_of_shared_factor() {
    let g = LowRankGaussian::new(
        vec![0.0; 2],
        Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap(),
        0.01,
    )
    .unwrap();
    let draws = g.sample(&mut SeededRng::new(2), 100_000).unwrap();
    let k = draws.len() as f64;
    let mean = |i: usize| draws.iter().map(|d| d[i]).sum::<f64>() / k;
    let (m0, m1) = (mean(0), mean(1));
    let cov = |i: usize, j: usize, mi: f64, mj: f64| {
        draws.iter().map(|d| (d[i] - mi) * (d[j] - mj)).sum::<f64>() / k
    };
    let corr = cov(0, 1, m0, m1) / (cov(0, 0, m0, m0) * cov(1, 1, m1, m1)).sqrt();
    assert!(corr >= 0.99, "{corr}");
}

#[test]
fn empirical_covariance_matches_dense() {
    let mut rng = SeededRng::new(17);
    let psi = Matrix::from_vec(5, 2, rng.normal_vec(10)).unwrap();
    let g = LowRankGaussian::new(rng.normal_vec(5), psi, 0.4).unwrap();
    let draws = g.sample(&mut rng, 100_000).unwrap();
    let k = draws.len() as f64;
    let means: Vec<f64> = (0..5)
        .map(|i| draws.iter().map(|d| d[i]).sum::<f64>() / k)
        .collect();
    let dense = g.to_dense();
    for i in 0..5 {
        for j in 0..5 {
            let truth = dense.cov()[(i, j)];
            if truth.abs() < 0.1 {
                continue;
            }
            let emp = draws
                .iter()
                .map(|d| (d[i] - means[i]) * (d[j] - means[j]))
                .sum::<f64>()
                / k;
            assert!(
                ((emp - truth) / truth).abs() <= 0.05,
                "({i},{j}) {emp} vs {truth}"
            );
        }
    }
}

#[test]
fn single_precision_tracks_double() {
    let mut rng = SeededRng::new(5);
    for _ in 0..20 {
        let g = random_gaussian(10, 3, &mut rng);
        let z: Vec<f64> = rng.normal_vec(10);
        let psi32 = Matrix::from_vec(
            10,
            3,
            g.psi().as_slice().iter().map(|&v| v as f32).collect(),
        )
        .unwrap();
        let g32: mgd_core::LowRankGaussian32 = LowRankGaussian::new(
            g.mu().iter().map(|&v| v as f32).collect(),
            psi32,
            g.sigma() as f32,
        )
        .unwrap();
        let z32: Vec<f32> = z.iter().map(|&v| v as f32).collect();
        let (a, b) = (g.nll(&z).unwrap(), g32.nll(&z32).unwrap() as f64);
        assert!((a - b).abs() <= 1e-4 * a.abs().max(1.0), "{a} vs {b}");
    }
}
