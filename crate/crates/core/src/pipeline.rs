//! The full estimation pipeline: moments, max-norm PSD repair, optional
//! diagonal shift, D-trace path and BIC selection.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dtrace::{self, AdmmOptions, PathResult};
use crate::error::Result;
use crate::model::{CountMatrix, CovEstimate, PrecisionEstimate};
use crate::moment::{self, MomentDiagnostics};
use crate::projection::{self, ProjectionOptions, ProjectionReport};

/// Which repaired covariance feeds the D-trace solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovEstimator {
    /// Projected estimate plus `t_star * I`.
    #[default]
    Shifted,
    /// Projected estimate as is.
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    /// Log-spaced grid from `lambda_max` down to `ratio * lambda_max`, selected by BIC.
    Auto { grid_size: usize, ratio: f64 },
    Fixed(f64),
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Auto {
            grid_size: 50,
            ratio: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineOptions {
    pub cov_estimator: CovEstimator,
    pub lambda: LambdaChoice,
    pub admm: AdmmOptions,
    pub projection: ProjectionOptions,
}

#[derive(Debug, Clone)]
pub struct NetworkFit {
    pub raw: CovEstimate,
    pub moment_diagnostics: MomentDiagnostics,
    pub projected: CovEstimate,
    pub projection_report: ProjectionReport,
    /// The covariance actually handed to the solver.
    pub sigma_hat: CovEstimate,
    pub path: PathResult,
    pub selected: usize,
    /// `true` when `lambda_max` was zero and only the unpenalized fit was run.
    pub degenerate_grid: bool,
    pub timings_ms: Vec<(String, u64)>,
}

impl NetworkFit {
    pub fn selected_estimate(&self) -> &PrecisionEstimate {
        &self.path.estimates[self.selected]
    }

    pub fn selected_lambda(&self) -> f64 {
        self.path.lambdas[self.selected]
    }
}

/// Runs the pipeline on counts whose library sizes are already set.
pub fn fit_network(data: &CountMatrix, opts: &PipelineOptions) -> Result<NetworkFit> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<(String, u64)>| {
        timings.push((name.to_string(), clock.elapsed().as_millis() as u64));
        clock = Instant::now();
    };

    let (raw, moment_diagnostics) = moment::moment_cov(data)?;
    lap("moments", &mut timings);
    let (projected, projection_report) = projection::project_psd_inf(&raw, &opts.projection)?;
    lap("projection", &mut timings);
    let sigma_hat = match opts.cov_estimator {
        CovEstimator::Shifted => projection::shift_cov(&projected, &projection_report)?,
        CovEstimator::Projected => projected.clone(),
    };

    let (grid, degenerate_grid) = match opts.lambda {
        LambdaChoice::Fixed(l) => (vec![l], false),
        LambdaChoice::Auto { grid_size, ratio } => {
            let g = dtrace::lambda_grid(&sigma_hat, grid_size, ratio)?;
            if g.is_degenerate() {
                (vec![0.0], true)
            } else {
                (g.values, false)
            }
        }
    };
    let path = dtrace::fit_path(&sigma_hat, &grid, &opts.admm, data.n())?;
    lap("dtrace", &mut timings);
    let selected = match opts.lambda {
        LambdaChoice::Fixed(_) => 0,
        LambdaChoice::Auto { .. } => dtrace::select_bic_index(&path)?,
    };

    Ok(NetworkFit {
        raw,
        moment_diagnostics,
        projected,
        projection_report,
        sigma_hat,
        path,
        selected,
        degenerate_grid,
        timings_ms: timings,
    })
}
