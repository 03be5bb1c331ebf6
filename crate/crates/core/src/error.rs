use std::path::PathBuf;

use nalgebra::DVector;

/// Errors produced by the numerical core.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    /// The iterative solver ran out of iterations. `best` is the best iterate seen.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: DVector<f64>,
    },

    #[error("imaging impossible for arm {arm}: effective object distance {distance} cm")]
    ImagingImpossible { arm: usize, distance: f64 },

    /// `U (I - A^- A) != 0`; the reduction error would be infinite.
    #[error("model is not estimable: violated subspace has dimension {deficiency} (residual norm {residual:e})")]
    NotEstimable { deficiency: usize, residual: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Failure inside one stage of the reconstruction pipeline.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// The innermost error, with any stage tags removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
