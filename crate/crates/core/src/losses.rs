//! Classical depth losses and their construction as special cases of the
//! low-rank Gaussian NLL.
//!
//! * `Ψ = 0_N` turns the NLL into the L2 loss (up to affine terms).
//! * `Ψ = 1_N` turns it into a scale-invariant loss with weight
//!   `α = σ⁻²N / (σ⁻²N + 1)`.
//! * Ψ built from the spectrum of `J = (∇ᵀ∇)⁻¹` approximates the gradient
//!   loss, where `J_ij = min(i, j) − ij/(N+1)` (1-based) and ∇ is the
//!   zero-boundary difference operator.

use crate::error::{check_len, Error, Result};
use crate::gaussian::LowRankGaussian;
use crate::linalg::Matrix;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Boundary handling for the 1-D difference operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// (N−1)×N forward differences; ignores the border.
    Forward,
    /// (N+1)×N differences against zeros beyond both ends, so that
    /// `∇ᵀ∇ = tridiag(−1, 2, −1)`.
    #[default]
    Dirichlet,
}

fn residual<T: Scalar>(mu: &[T], z: &[T]) -> Result<Vec<T>> {
    check_len("loss inputs", mu.len(), z.len())?;
    Ok(z.iter().zip(mu).map(|(&a, &b)| a - b).collect())
}

/// `rᵀr` with `r = z − mu`.
pub fn l2_loss<T: Scalar>(mu: &[T], z: &[T]) -> Result<T> {
    let r = residual(mu, z)?;
    Ok(r.iter().map(|&x| x * x).sum())
}

/// `α = σ⁻²N / (σ⁻²N + 1)`.
pub fn si_alpha<T: Scalar>(n: usize, sigma: T) -> T {
    let k = T::from_usize_lossy(n) / (sigma * sigma);
    k / (k + T::one())
}

/// `rᵀr − (α/N)(rᵀ1)²` with α from [`si_alpha`].
pub fn si_loss<T: Scalar>(mu: &[T], z: &[T], sigma: T) -> Result<T> {
    si_loss_with_alpha(mu, z, si_alpha(mu.len(), sigma))
}

/// Scale-invariant loss with an explicit weight; `alpha = 1` is the fully
/// shift-invariant form.
pub fn si_loss_with_alpha<T: Scalar>(mu: &[T], z: &[T], alpha: T) -> Result<T> {
    let r = residual(mu, z)?;
    if r.is_empty() {
        return Err(Error::InvalidArgument("empty residual".into()));
    }
    let n = T::from_usize_lossy(r.len());
    let sum: T = r.iter().copied().sum();
    let sq: T = r.iter().map(|&x| x * x).sum();
    Ok(sq - alpha / n * sum * sum)
}

/// `rᵀ(∇ᵀ∇)r` as a sum of squared differences, O(N).
pub fn gradient_loss<T: Scalar>(mu: &[T], z: &[T], boundary: Boundary) -> Result<T> {
    let r = residual(mu, z)?;
    if r.len() < 2 {
        return Err(Error::InvalidArgument(
            "gradient loss needs at least two pixels".into(),
        ));
    }
    let interior: T = r.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
    Ok(match boundary {
        Boundary::Forward => interior,
        Boundary::Dirichlet => {
            let (first, last) = (r[0], r[r.len() - 1]);
            interior + first * first + last * last
        }
    })
}

/// `J_ij = min(i, j) − ij/(n+1)` with 1-based `i, j`; the inverse of
/// `tridiag(−1, 2, −1)`.
pub fn j_matrix<T: Scalar>(n: usize) -> Result<Matrix<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("j_matrix needs n ≥ 1".into()));
    }
    let np1 = T::from_usize_lossy(n + 1);
    Ok(Matrix::from_fn(n, n, |i0, j0| {
        let (i, j) = (i0 + 1, j0 + 1);
        T::from_usize_lossy(i.min(j)) - T::from_usize_lossy(i * j) / np1
    }))
}

/// `λ_l = (2 − 2cos(lπ/(n+1)))⁻¹` for 1-based `l`; strictly decreasing in `l`.
pub fn j_eigenvalue<T: Scalar>(n: usize, l: usize) -> T {
    let two = T::lit(2.0);
    let angle = T::from_usize_lossy(l) * T::PI() / T::from_usize_lossy(n + 1);
    (two - two * angle.cos()).recip()
}

/// Unit eigenvector of J paired with `λ_l`: entries
/// `sin(klπ/(n+1)) / √((n+1)/2)` for `k = 1..=n`.
pub fn j_eigenvector<T: Scalar>(n: usize, l: usize) -> Vec<T> {
    let np1 = T::from_usize_lossy(n + 1);
    let norm = (np1 / T::lit(2.0)).sqrt();
    (1..=n)
        .map(|k| (T::from_usize_lossy(k * l) * T::PI() / np1).sin() / norm)
        .collect()
}

/// `Ψ_kl = √λ_l · U_kl` over the `m` largest eigenvalues of J.
pub fn gradient_psi<T: Scalar>(n: usize, m: usize) -> Result<Matrix<T>> {
    if n == 0 || m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "gradient_psi needs 1 ≤ m ≤ n, got n={n}, m={m}"
        )));
    }
    let mut psi = Matrix::zeros(n, m);
    for l in 1..=m {
        let scale = j_eigenvalue::<T>(n, l).sqrt();
        for (k, u) in j_eigenvector::<T>(n, l).into_iter().enumerate() {
            psi[(k, l - 1)] = scale * u;
        }
    }
    Ok(psi)
}

/// Which classical loss a reduction check compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionKind {
    /// `Ψ = 0_N` against `rᵀr`.
    L2,
    /// `Ψ = 1_N` against the shift-invariant loss (α = 1).
    ScaleInvariant,
    /// Truncated eigen-factor of J with `rank` columns against the gradient
    /// loss. The factor is built for the Dirichlet convention; checking it
    /// against `Forward` shows the boundary mismatch.
    Gradient { rank: usize, boundary: Boundary },
}

impl ReductionKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::L2 => "l2",
            Self::ScaleInvariant => "si",
            Self::Gradient { .. } => "gradient",
        }
    }
}

/// How well the NLL tracks a classical loss modulo an affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport<T> {
    /// Mean NLL over the probes.
    pub nll_value: T,
    /// Mean classical loss over the probes.
    pub classical_value: T,
    /// Fitted `nll ≈ slope·classical + intercept`.
    pub slope: T,
    pub intercept: T,
    /// Root-mean-square residual of the affine fit. Always ≥ 0.
    pub affine_gap: T,
    /// `affine_gap / mean|nll|`.
    pub relative_gap: T,
}

/// Draws `probe_count` residuals `r = ε + c·1` (ε and c standard normal),
/// evaluates the NLL with the case's Ψ at `z = r`, `μ = 0`, and fits the
/// best affine map from classical loss to NLL.
pub fn check_reduction<T: Scalar>(
    kind: ReductionKind,
    n: usize,
    sigma: T,
    probe_count: usize,
    rng: &mut SeededRng,
) -> Result<ReductionReport<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument("reduction check needs n ≥ 2".into()));
    }
    if probe_count < 8 {
        return Err(Error::InvalidArgument(
            "reduction check needs ≥ 8 probes".into(),
        ));
    }
    let psi = match kind {
        ReductionKind::L2 => Matrix::zeros(n, 1),
        ReductionKind::ScaleInvariant => Matrix::from_vec(n, 1, vec![T::one(); n])?,
        ReductionKind::Gradient { rank, .. } => gradient_psi(n, rank)?,
    };
    let mean = vec![T::zero(); n];
    let g = LowRankGaussian::new(mean.clone(), psi, sigma)?;
    let ws = g.workspace()?;

    let mut nll = Vec::with_capacity(probe_count);
    let mut classical = Vec::with_capacity(probe_count);
    for _ in 0..probe_count {
        let offset: T = rng.normal();
        let r: Vec<T> = (0..n).map(|_| rng.normal::<T>() + offset).collect();
        nll.push(ws.nll(&g, &r)?);
        classical.push(match kind {
            ReductionKind::L2 => l2_loss(&mean, &r)?,
            ReductionKind::ScaleInvariant => si_loss_with_alpha(&mean, &r, T::one())?,
            ReductionKind::Gradient { boundary, .. } => gradient_loss(&mean, &r, boundary)?,
        });
    }
    Ok(affine_fit_report(&classical, &nll))
}

fn affine_fit_report<T: Scalar>(x: &[T], y: &[T]) -> ReductionReport<T> {
    let k = T::from_usize_lossy(x.len());
    let mx = x.iter().copied().sum::<T>() / k;
    let my = y.iter().copied().sum::<T>() / k;
    let sxx: T = x.iter().map(|&xi| (xi - mx) * (xi - mx)).sum();
    let sxy: T = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (xi - mx) * (yi - my))
        .sum();
    let slope = if sxx > T::zero() {
        sxy / sxx
    } else {
        T::zero()
    };
    let intercept = my - slope * mx;
    let sse: T = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let e = yi - (slope * xi + intercept);
            e * e
        })
        .sum();
    let affine_gap = (sse / k).sqrt();
    let mean_abs = y.iter().map(|v| v.abs()).sum::<T>() / k;
    ReductionReport {
        nll_value: my,
        classical_value: mx,
        slope,
        intercept,
        affine_gap,
        relative_gap: if mean_abs > T::zero() {
            affine_gap / mean_abs
        } else {
            affine_gap
        },
    }
}
