//! Low-rank multivariate Gaussian distributions over depth maps.
//!
//! A depth map of N pixels is modelled as `N(μ, ΨΨᵀ + σ²I)` with a rank-M
//! factor Ψ. Likelihood, determinant and solves run through the M×M
//! capacitance matrix in O(NM² + M³), never forming the N×N covariance.
//!
//! The numerical core is generic over [`Scalar`] (`f32`, `f64`); the
//! aliases below fix it to `f64`, which all stated tolerances assume.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod error;
pub mod fit;
pub mod fusion;
pub mod gaussian;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod mgd;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use fit::{
    finite_diff_check, fit_mle, mean_nll, mean_nll_and_gradients, nll_gradients, total_loss,
    total_loss_with, Checkpoint, FitConfig, FitResult, NllGradient,
};
pub use fusion::{diagonal_nll, truncate_rank, GaussianEnsemble, NllComparison};
pub use gaussian::{CholeskyWorkspace, DenseGaussian, LowRankGaussian};
pub use linalg::{Cholesky, Matrix};
pub use losses::{
    check_reduction, gradient_loss, gradient_psi, j_eigenvalue, j_eigenvector, j_matrix, l2_loss,
    si_alpha, si_loss, Boundary, ReductionKind, ReductionReport,
};
pub use metrics::{
    align_scale_shift, evaluate, evaluate_with, Alignment, DepthRaster, InverseDepthUnit,
    MetricReport,
};
pub use mgd::MgdFile;
pub use rng::SeededRng;
pub use scalar::Scalar;

/// Default isotropic noise std-dev, meters.
pub const DEFAULT_SIGMA: f64 = 0.1;
/// Default rank budget M.
pub const DEFAULT_RANK: usize = 128;
pub const DEFAULT_SEED: u64 = 42;
/// Default depth cap, meters.
pub const DEFAULT_CAP: f64 = metrics::INDOOR_CAP;

pub type Matrix64 = Matrix<f64>;
pub type LowRankGaussian64 = LowRankGaussian<f64>;
pub type DenseGaussian64 = DenseGaussian<f64>;
pub type GaussianEnsemble64 = GaussianEnsemble<f64>;
pub type DepthRaster64 = DepthRaster<f64>;
pub type MetricReport64 = MetricReport<f64>;
pub type NllGradient64 = NllGradient<f64>;
pub type FitConfig64 = FitConfig<f64>;

pub type Matrix32 = Matrix<f32>;
pub type LowRankGaussian32 = LowRankGaussian<f32>;
pub type DenseGaussian32 = DenseGaussian<f32>;
