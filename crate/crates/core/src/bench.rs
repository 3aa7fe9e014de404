//! Wall-clock scaling of the low-rank NLL in N at fixed M.

use std::hint::black_box;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::gaussian::LowRankGaussian;
use crate::linalg::Matrix;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    /// Median nanoseconds per NLL evaluation.
    pub nanos: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub m: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub repetitions: usize,
    /// Evaluations per timed repetition.
    pub inner: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            m: 8,
            n_min: 1 << 12,
            n_max: 1 << 15,
            repetitions: 5,
            inner: 16,
            seed: crate::DEFAULT_SEED,
        }
    }
}

/// Times the NLL for `N = n_min, 2·n_min, …` up to `n_max`. Each size gets
/// one discarded warm-up repetition, then the median of `repetitions`.
pub fn scaling_sweep(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.n_min == 0 || cfg.n_max < cfg.n_min || cfg.repetitions == 0 || cfg.inner == 0 {
        return Err(Error::InvalidArgument(
            "bench needs 0 < n_min ≤ n_max and positive counts".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut n = cfg.n_min;
    while n <= cfg.n_max {
        rows.push(time_one(n, cfg)?);
        n = match n.checked_mul(2) {
            Some(next) => next,
            None => break,
        };
    }
    Ok(rows)
}

fn time_one(n: usize, cfg: &BenchConfig) -> Result<BenchRow> {
    let mut rng = SeededRng::new(cfg.seed ^ n as u64);
    let psi = Matrix::from_vec(n, cfg.m, rng.normal_vec(n * cfg.m))?;
    let g = LowRankGaussian::new(rng.normal_vec(n), psi, 0.1)?;
    let z: Vec<f64> = rng.normal_vec(n);

    let mut samples = Vec::with_capacity(cfg.repetitions);
    for rep in 0..=cfg.repetitions {
        let start = Instant::now();
        for _ in 0..cfg.inner {
            black_box(black_box(&g).nll(black_box(&z))?);
        }
        let elapsed = start.elapsed().as_nanos() / cfg.inner as u128;
        if rep > 0 {
            samples.push(elapsed as u64);
        }
    }
    samples.sort_unstable();
    Ok(BenchRow {
        n,
        m: cfg.m,
        nanos: samples[samples.len() / 2],
    })
}

/// Time ratios between consecutive rows.
pub fn doubling_ratios(rows: &[BenchRow]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| w[1].nanos as f64 / (w[0].nanos.max(1)) as f64)
        .collect()
}
