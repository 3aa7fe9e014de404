//! Low-rank Gaussian over a flattened depth map, with covariance
//! `Σ = ΨΨᵀ + σ²I`, and the explicit dense form used as an oracle.
//!
//! Every low-rank operation goes through the M×M capacitance matrix
//! `A = σ⁻²ΨᵀΨ + I_M` and its Cholesky factor, so nothing of size N×N is
//! ever formed.

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Gaussian with mean `mu` and covariance `psi·psiᵀ + sigma²·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankGaussian<T> {
    mu: Vec<T>,
    psi: Matrix<T>,
    sigma: T,
}

impl<T: Scalar> LowRankGaussian<T> {
    /// `psi` must have one row per entry of `mu`; its column count is the
    /// rank budget M (zero columns give the independent-pixel model).
    pub fn new(mu: Vec<T>, psi: Matrix<T>, sigma: T) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidArgument(
                "dimension N must be positive".into(),
            ));
        }
        check_len("psi rows vs mean length", mu.len(), psi.rows())?;
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { mu, psi, sigma })
    }

    /// Independent pixels: `Σ = σ²I`.
    pub fn isotropic(mu: Vec<T>, sigma: T) -> Result<Self> {
        let n = mu.len();
        Self::new(mu, Matrix::zeros(n, 0), sigma)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// Rank budget (number of columns of Ψ).
    #[inline]
    pub fn m(&self) -> usize {
        self.psi.cols()
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn psi(&self) -> &Matrix<T> {
        &self.psi
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn with_mu(&self, mu: Vec<T>) -> Result<Self> {
        Self::new(mu, self.psi.clone(), self.sigma)
    }

    pub fn with_psi(&self, psi: Matrix<T>) -> Result<Self> {
        Self::new(self.mu.clone(), psi, self.sigma)
    }

    pub fn with_sigma(&self, sigma: T) -> Result<Self> {
        Self::new(self.mu.clone(), self.psi.clone(), sigma)
    }

    /// Factorizes the capacitance matrix once for repeated evaluations.
    pub fn workspace(&self) -> Result<CholeskyWorkspace<T>> {
        CholeskyWorkspace::new(self)
    }

    /// Negative log density of `z`. O(NM² + M³) time.
    pub fn nll(&self, z: &[T]) -> Result<T> {
        self.workspace()?.nll(self, z)
    }

    /// `log det(ΨΨᵀ + σ²I) = 2N log σ + log det A`.
    pub fn log_det(&self) -> Result<T> {
        Ok(self.workspace()?.log_det(self))
    }

    /// `Σ⁻¹ v` through the matrix inversion lemma.
    pub fn solve(&self, v: &[T]) -> Result<Vec<T>> {
        self.workspace()?.solve(self, v)
    }

    /// `Σ v` without forming Σ.
    pub fn cov_mul(&self, v: &[T]) -> Result<Vec<T>> {
        check_len("covariance multiply", self.n(), v.len())?;
        let p = self.psi.tr_matvec(v)?;
        let s2 = self.sigma * self.sigma;
        let mut out = self.psi.matvec(&p)?;
        for (o, &vi) in out.iter_mut().zip(v) {
            *o += s2 * vi;
        }
        Ok(out)
    }

    /// Explicit `(μ, ΨΨᵀ + σ²I)`.
    pub fn to_dense(&self) -> DenseGaussian<T> {
        let mut cov = self.psi.outer_gram();
        cov.add_diagonal(self.sigma * self.sigma);
        DenseGaussian {
            mu: self.mu.clone(),
            cov,
        }
    }

    /// Draws `count` vectors `μ + Ψ·ε_M + σ·ε_N`. For each draw the M
    /// latent variates are taken from `rng` before the N pixel variates.
    pub fn sample(&self, rng: &mut SeededRng, count: usize) -> Result<Vec<Vec<T>>> {
        if count == 0 {
            return Err(Error::InvalidArgument(
                "sample count must be positive".into(),
            ));
        }
        let mut draws = Vec::with_capacity(count);
        for _ in 0..count {
            let latent: Vec<T> = rng.normal_vec(self.m());
            let mut z = self.psi.matvec(&latent)?;
            for (zi, &mi) in z.iter_mut().zip(&self.mu) {
                *zi += mi + self.sigma * rng.normal::<T>();
            }
            draws.push(z);
        }
        Ok(draws)
    }

    /// Row `i` of Σ: `Ψ·(Ψᵀe_i) + σ²e_i`, in O(NM).
    pub fn covariance_row(&self, i: usize) -> Result<Vec<T>> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n(),
            });
        }
        let mut row = self.psi.matvec(self.psi.row(i))?;
        row[i] += self.sigma * self.sigma;
        Ok(row)
    }

    /// Per-pixel marginal variances, `diag(Σ)`.
    pub fn marginal_variances(&self) -> Vec<T> {
        let s2 = self.sigma * self.sigma;
        (0..self.n())
            .map(|i| {
                let r = self.psi.row(i);
                dot(r, r) + s2
            })
            .collect()
    }

    /// Exact joint marginal of pixels `a` and `b`.
    pub fn marginal_pair(&self, a: usize, b: usize) -> Result<DenseGaussian<T>> {
        let n = self.n();
        for idx in [a, b] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, len: n });
            }
        }
        if a == b {
            return Err(Error::InvalidArgument(
                "marginal pair needs two distinct pixels".into(),
            ));
        }
        let s2 = self.sigma * self.sigma;
        let (ra, rb) = (self.psi.row(a), self.psi.row(b));
        let cab = dot(ra, rb);
        let cov = Matrix::from_vec(2, 2, vec![dot(ra, ra) + s2, cab, cab, dot(rb, rb) + s2])?;
        DenseGaussian::new(vec![self.mu[a], self.mu[b]], cov)
    }
}

/// Capacitance matrix `A = σ⁻²ΨᵀΨ + I_M` with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct CholeskyWorkspace<T> {
    a: Matrix<T>,
    chol: Cholesky<T>,
}

impl<T: Scalar> CholeskyWorkspace<T> {
    pub fn new(g: &LowRankGaussian<T>) -> Result<Self> {
        let inv_s2 = (g.sigma * g.sigma).recip();
        let mut a = g.psi.gram().scale(inv_s2);
        a.add_diagonal(T::one());
        let chol = Cholesky::new(&a).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::NonFinite("capacitance matrix"),
            other => other,
        })?;
        Ok(Self { a, chol })
    }

    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn l(&self) -> &Matrix<T> {
        self.chol.factor()
    }

    pub fn cholesky(&self) -> &Cholesky<T> {
        &self.chol
    }

    /// Negative log density following the capacitance-Cholesky recipe:
    /// `r = z − μ`, `p = Ψᵀr`, `q = L⁻¹p`, then
    /// `N/2·log 2πσ² + Σ log L_ii + σ⁻²/2·rᵀr − σ⁻⁴/2·qᵀq`.
    pub fn nll(&self, g: &LowRankGaussian<T>, z: &[T]) -> Result<T> {
        check_len("nll observation", g.n(), z.len())?;
        let r: Vec<T> = z.iter().zip(&g.mu).map(|(&zi, &mi)| zi - mi).collect();
        self.nll_residual(g, &r)
    }

    fn nll_residual(&self, g: &LowRankGaussian<T>, r: &[T]) -> Result<T> {
        let half = T::lit(0.5);
        let s2 = g.sigma * g.sigma;
        let inv_s2 = s2.recip();
        let p = g.psi.tr_matvec(r)?;
        let q = self.chol.solve_lower(&p)?;
        let log_l: T = (0..g.m()).map(|i| self.chol.factor()[(i, i)].ln()).sum();
        let n = T::from_usize_lossy(g.n());
        let value = half * n * (T::TAU() * s2).ln() + log_l + half * inv_s2 * dot(r, r)
            - half * inv_s2 * inv_s2 * dot(&q, &q);
        if !value.is_finite() {
            return Err(Error::NonFinite("negative log likelihood"));
        }
        Ok(value)
    }

    pub fn log_det(&self, g: &LowRankGaussian<T>) -> T {
        let two = T::lit(2.0);
        two * T::from_usize_lossy(g.n()) * g.sigma.ln() + self.chol.log_det()
    }

    /// `A⁻¹ x`.
    pub fn solve_capacitance(&self, x: &[T]) -> Result<Vec<T>> {
        self.chol.solve(x)
    }

    /// `Σ⁻¹v = σ⁻²v − σ⁻⁴Ψ A⁻¹ Ψᵀv`.
    pub fn solve(&self, g: &LowRankGaussian<T>, v: &[T]) -> Result<Vec<T>> {
        check_len("woodbury solve", g.n(), v.len())?;
        let inv_s2 = (g.sigma * g.sigma).recip();
        let p = g.psi.tr_matvec(v)?;
        let w = self.chol.solve(&p)?;
        let corr = g.psi.matvec(&w)?;
        Ok(v.iter()
            .zip(&corr)
            .map(|(&vi, &ci)| inv_s2 * vi - inv_s2 * inv_s2 * ci)
            .collect())
    }
}

/// Gaussian with an explicit covariance matrix. O(N³) evaluation; the
/// reference the low-rank path is checked against.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGaussian<T> {
    mu: Vec<T>,
    cov: Matrix<T>,
}

impl<T: Scalar> DenseGaussian<T> {
    pub fn new(mu: Vec<T>, cov: Matrix<T>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidArgument(
                "dimension N must be positive".into(),
            ));
        }
        check_len("dense covariance rows", mu.len(), cov.rows())?;
        check_len("dense covariance cols", mu.len(), cov.cols())?;
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
        if !(cov.asymmetry() <= tol) {
            return Err(Error::InvalidArgument(
                "dense covariance is not symmetric".into(),
            ));
        }
        Ok(Self { mu, cov })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn cov(&self) -> &Matrix<T> {
        &self.cov
    }

    /// `½(N log 2π + log det Σ + rᵀΣ⁻¹r)` by a full Cholesky of Σ.
    pub fn nll(&self, z: &[T]) -> Result<T> {
        check_len("dense nll observation", self.n(), z.len())?;
        let chol = Cholesky::new(&self.cov)?;
        let r: Vec<T> = z.iter().zip(&self.mu).map(|(&zi, &mi)| zi - mi).collect();
        let y = chol.solve_lower(&r)?;
        let n = T::from_usize_lossy(self.n());
        Ok(T::lit(0.5) * (n * T::TAU().ln() + chol.log_det() + dot(&y, &y)))
    }

    pub fn log_det(&self) -> Result<T> {
        Ok(Cholesky::new(&self.cov)?.log_det())
    }
}
