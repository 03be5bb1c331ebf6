//! Dense numerical kernels: pseudoinverse, Cholesky-based SPD solves,
//! low-rank-plus-diagonal inversion and box-constrained Mahalanobis projection.

mod dense;
mod pinv;
mod project;
mod woodbury;

pub use dense::{
    check_symmetric, cholesky_in_place, symmetrize, SpdFactor, DEFAULT_PIVOT_TOLERANCE,
    SYMMETRY_TOLERANCE,
};
pub(crate) use pinv::svd;
pub use pinv::{default_cutoff, numerical_rank, pseudoinverse};
pub use project::{
    clamp_to_box, kkt_residual, largest_eigenvalue, mahalanobis_project, MahalanobisMetric,
    Projection, ProjectionMethod, ProjectionOptions,
};
pub use woodbury::{LowRankPlusDiag, WoodburyInverse};

/// Relative regularization applied to singular estimate covariances before inversion.
pub const COVARIANCE_REGULARIZATION: f64 = 1e-10;
