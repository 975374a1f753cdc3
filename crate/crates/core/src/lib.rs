//! Sparse network inference for multivariate count data under the Poisson
//! log-normal model.
//!
//! The latent covariance is estimated by the method of moments, repaired to
//! positive semidefiniteness in the element-wise max norm, and the sparse
//! precision matrix is obtained from the lasso-penalized D-trace loss.

pub mod dtrace;
pub mod error;
pub mod linalg;
pub mod model;
pub mod moment;
pub mod pipeline;
pub mod projection;
pub mod sim;

pub use dtrace::{
    bic_score, dtrace_fit, fit_path, kkt_residual, lambda_grid, select_bic, AdmmOptions,
    DtraceProblem, LambdaGrid, PathResult,
};
pub use error::{PlnError, Result};
pub use model::{
    estimate_lib_sizes, pln_moments, pln_sample, CountMatrix, CovEstimate, CovStage, LatentParams,
    PlnMoments, PrecisionEstimate, TrueNetwork,
};
pub use moment::{moment_cov, moment_cov_stream, MomentAccumulator, MomentDiagnostics};
pub use pipeline::{fit_network, CovEstimator, LambdaChoice, NetworkFit, PipelineOptions};
pub use projection::{project_psd_inf, shift_cov, ProjectionOptions, ProjectionReport};
