use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlnError {
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("matrix is not symmetric (max |A - A^T| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("latent rate overflow at row {row}, column {col} (rate {rate:e})")]
    LatentRateOverflow { row: usize, col: usize, rate: f64 },

    #[error("row {row} has no nonzero counts")]
    EmptyRow { row: usize },

    #[error("genes with all-zero counts: {genes:?}")]
    ZeroGenes { genes: Vec<usize> },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no data")]
    NoData,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("true network has an empty support")]
    EmptySupport,

    #[error("no converged fit on the path")]
    NoConvergedFit,
}

pub type Result<T> = std::result::Result<T, PlnError>;
