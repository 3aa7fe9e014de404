//! Equal-weight mixtures of low-rank Gaussians (Monte Carlo marginalization
//! over parameter samples) and their moment-matched single-Gaussian form.

use crate::error::{check_len, Error, Result};
use crate::gaussian::LowRankGaussian;
use crate::linalg::{symmetric_eigen, Matrix};
use crate::scalar::Scalar;

/// `S ≥ 1` components sharing N, M and σ, each with weight `1/S`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEnsemble<T> {
    components: Vec<LowRankGaussian<T>>,
}

impl<T: Scalar> GaussianEnsemble<T> {
    pub fn new(components: Vec<LowRankGaussian<T>>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidArgument(
                "ensemble needs at least one component".into(),
            ));
        };
        for c in &components[1..] {
            check_len("ensemble component N", first.n(), c.n())?;
            check_len("ensemble component M", first.m(), c.m())?;
            if c.sigma() != first.sigma() {
                return Err(Error::InvalidArgument(
                    "ensemble components must share sigma".into(),
                ));
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[LowRankGaussian<T>] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn n(&self) -> usize {
        self.components[0].n()
    }

    pub fn m(&self) -> usize {
        self.components[0].m()
    }

    pub fn sigma(&self) -> T {
        self.components[0].sigma()
    }

    /// `−log((1/S)·Σ_s exp(−nll_s))`, stabilized by the largest
    /// component log-density.
    pub fn nll(&self, z: &[T]) -> Result<T> {
        check_len("ensemble observation", self.n(), z.len())?;
        let log_dens: Vec<T> = self
            .components
            .iter()
            .map(|g| g.nll(z).map(|v| -v))
            .collect::<Result<_>>()?;
        let max = log_dens.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = log_dens.iter().map(|&l| (l - max).exp()).sum();
        let s = T::from_usize_lossy(self.len());
        Ok(-(max + sum.ln() - s.ln()))
    }

    pub fn mean(&self) -> Vec<T> {
        let s = T::from_usize_lossy(self.len());
        let mut mean = vec![T::zero(); self.n()];
        for g in &self.components {
            for (m, &x) in mean.iter_mut().zip(g.mu()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= s);
        mean
    }

    /// Moment-matched Gaussian: mean `μ̄ = (1/S)Σμ^s` and factor
    /// `(1/√S)·[Ψ¹ … Ψ^S, μ¹−μ̄ … μ^S−μ̄]` of width `S·M + S`, whose
    /// `Ψ̄Ψ̄ᵀ + σ²I` is the exact mixture covariance.
    pub fn fuse(&self) -> Result<LowRankGaussian<T>> {
        let mean = self.mean();
        let inv_sqrt_s = T::from_usize_lossy(self.len()).sqrt().recip();
        let deviations: Vec<Matrix<T>> = self
            .components
            .iter()
            .map(|g| {
                let d: Vec<T> = g.mu().iter().zip(&mean).map(|(&a, &b)| a - b).collect();
                Matrix::column_vector(&d)
            })
            .collect();
        let blocks: Vec<&Matrix<T>> = self
            .components
            .iter()
            .map(LowRankGaussian::psi)
            .chain(deviations.iter())
            .collect();
        let psi = Matrix::hstack(&blocks)?.scale(inv_sqrt_s);
        LowRankGaussian::new(mean, psi, self.sigma())
    }

    /// [`fuse`](Self::fuse) followed by [`truncate_rank`].
    pub fn fuse_truncated(&self, rank: usize) -> Result<LowRankGaussian<T>> {
        truncate_rank(&self.fuse()?, rank)
    }

    /// NLL of `z` under the fused Gaussian and under independent pixels
    /// with standard deviations `baseline_std`.
    pub fn nll_comparison(&self, z: &[T], baseline_std: &[T]) -> Result<NllComparison<T>> {
        check_len("comparison observation", self.n(), z.len())?;
        check_len("baseline std", self.n(), baseline_std.len())?;
        let fused = self.fuse()?.nll(z)?;
        let diagonal = diagonal_nll(&self.mean(), baseline_std, z)?;
        Ok(NllComparison {
            fused,
            diagonal,
            n: self.n(),
        })
    }
}

/// Totals for one observation; per-pixel means via the accessors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllComparison<T> {
    pub fused: T,
    pub diagonal: T,
    pub n: usize,
}

impl<T: Scalar> NllComparison<T> {
    pub fn fused_per_pixel(&self) -> T {
        self.fused / T::from_usize_lossy(self.n)
    }

    pub fn diagonal_per_pixel(&self) -> T {
        self.diagonal / T::from_usize_lossy(self.n)
    }
}

/// Sum of independent univariate Gaussian NLLs.
pub fn diagonal_nll<T: Scalar>(mu: &[T], std: &[T], z: &[T]) -> Result<T> {
    check_len("diagonal nll std", mu.len(), std.len())?;
    check_len("diagonal nll observation", mu.len(), z.len())?;
    let half = T::lit(0.5);
    let mut total = T::zero();
    for ((&m, &s), &x) in mu.iter().zip(std).zip(z) {
        if !(s > T::zero()) {
            return Err(Error::InvalidArgument(
                "baseline std must be positive".into(),
            ));
        }
        let r = (x - m) / s;
        total += half * T::TAU().ln() + s.ln() + half * r * r;
    }
    Ok(total)
}

/// Keeps the `rank` leading singular directions of Ψ: `Ψ·V_rank`, where
/// `V` are eigenvectors of `ΨᵀΨ`. Width-`rank` inputs are returned as is.
pub fn truncate_rank<T: Scalar>(g: &LowRankGaussian<T>, rank: usize) -> Result<LowRankGaussian<T>> {
    if rank >= g.m() {
        return Ok(g.clone());
    }
    let eig = symmetric_eigen(&g.psi().gram())?;
    let keep: Vec<usize> = (0..rank).collect();
    let v = eig.vectors.select_columns(&keep);
    g.with_psi(g.psi().matmul(&v)?)
}
