//! One simulation cell: a ground-truth graph, replicated count data sets and
//! the metrics of the fitted networks.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtrace::NONZERO_TOL;
use crate::error::{PlnError, Result};
use crate::model::{estimate_lib_sizes, pln_sample, CountMatrix, LatentParams, TrueNetwork};
use crate::pipeline::{fit_network, CovEstimator, LambdaChoice, PipelineOptions};
use crate::sim::graphs::{gen_graph, GraphSpec};
use crate::sim::metrics;

fn default_n() -> usize {
    2000
}
fn default_replicates() -> usize {
    1
}
fn default_grid_size() -> usize {
    50
}
fn default_grid_ratio() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub id: Option<String>,
    pub graph: GraphSpec,
    #[serde(default = "default_n")]
    pub n: usize,
    pub mu_level: f64,
    pub libsize_sd: f64,
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_grid_size")]
    pub lambda_grid_size: usize,
    #[serde(default = "default_grid_ratio")]
    pub lambda_grid_ratio: f64,
    /// Draw a fresh graph for every replicate instead of sharing one.
    #[serde(default)]
    pub regenerate_graph: bool,
    #[serde(default)]
    pub cov_estimator: CovEstimator,
}

impl ScenarioConfig {
    pub fn new(graph: GraphSpec, n: usize, mu_level: f64, libsize_sd: f64) -> Self {
        ScenarioConfig {
            id: None,
            graph,
            n,
            mu_level,
            libsize_sd,
            n_replicates: default_replicates(),
            master_seed: 0,
            lambda_grid_size: default_grid_size(),
            lambda_grid_ratio: default_grid_ratio(),
            regenerate_graph: false,
            cov_estimator: CovEstimator::Shifted,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        if self.n < 2 {
            return Err(PlnError::InvalidArgument(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.libsize_sd > 0.0 && self.libsize_sd.is_finite()) {
            return Err(PlnError::InvalidArgument(format!(
                "library-size sd must be positive, got {}",
                self.libsize_sd
            )));
        }
        if !self.mu_level.is_finite() {
            return Err(PlnError::InvalidArgument("mu level must be finite".into()));
        }
        if self.n_replicates == 0 {
            return Err(PlnError::InvalidArgument("need at least one replicate".into()));
        }
        if self.lambda_grid_size < 2 {
            return Err(PlnError::InvalidArgument("lambda grid needs at least two values".into()));
        }
        Ok(())
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            cov_estimator: self.cov_estimator,
            lambda: LambdaChoice::Auto {
                grid_size: self.lambda_grid_size,
                ratio: self.lambda_grid_ratio,
            },
            ..PipelineOptions::default()
        }
    }
}

/// Metrics of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub replicate: usize,
    pub replicate_seed: u64,
    pub aupr: f64,
    pub auc: f64,
    pub tpr: f64,
    /// `None` when the selected fit has no edges.
    pub tdr: Option<f64>,
    pub frobenius_risk: f64,
    pub lambda_bic: f64,
    pub n_edges_est: usize,
    pub zero_fraction: f64,
    pub t_star: f64,
    pub converged: bool,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub replicate_seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    /// The shared graph, or the first replicate's graph when regenerated.
    pub truth: TrueNetwork,
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<ReplicateFailure>,
}

impl ScenarioOutcome {
    pub fn mean_aupr(&self) -> f64 {
        mean(self.records.iter().map(|r| r.aupr))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for stream `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(mix(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Counts plus the library sizes they were drawn with.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub counts: CountMatrix,
    pub latent: LatentParams,
}

/// Draws `S_i ~ logN(log 10, sd^2)` and PLN counts with `Sigma = theta^{-1}`.
pub fn simulate_dataset(
    theta: &DMatrix<f64>,
    n: usize,
    mu_level: f64,
    libsize_sd: f64,
    seed: u64,
) -> Result<SimulatedData> {
    let latent = LatentParams::from_precision(mu_level, theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let log10 = 10f64.ln();
    let lib_sizes: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (log10 + libsize_sd * z).exp()
        })
        .collect();
    let counts = pln_sample(&latent, &lib_sizes, derive_seed(seed, 1))?;
    Ok(SimulatedData { counts, latent })
}

fn replicate_truth(config: &ScenarioConfig, shared: &TrueNetwork, r: usize) -> Result<TrueNetwork> {
    if config.regenerate_graph && r > 0 {
        let mut spec = config.graph.clone();
        spec.seed = derive_seed(spec.seed, r as u64);
        gen_graph(&spec)
    } else {
        Ok(shared.clone())
    }
}

/// Simulates, fits and scores replicate `r`.
pub fn run_replicate(
    config: &ScenarioConfig,
    truth: &TrueNetwork,
    r: usize,
) -> Result<MetricsRecord> {
    let start = Instant::now();
    let seed = derive_seed(config.master_seed, r as u64);
    let sim = simulate_dataset(&truth.theta, config.n, config.mu_level, config.libsize_sd, seed)?;
    let zero_fraction = sim.counts.zero_fraction();
    let lib = estimate_lib_sizes(&sim.counts)?;
    let data = sim.counts.with_lib_sizes(lib)?;
    let fit = fit_network(&data, &config.pipeline_options())?;

    let selected = fit.selected_estimate();
    let (tpr, tdr) = metrics::tpr_tdr(selected, truth)?;
    Ok(MetricsRecord {
        replicate: r,
        replicate_seed: seed,
        aupr: metrics::aupr(&fit.path, truth)?,
        auc: metrics::auc(&fit.path, truth)?,
        tpr,
        tdr,
        frobenius_risk: metrics::frobenius_risk(selected, truth)?,
        lambda_bic: fit.selected_lambda(),
        n_edges_est: selected.edges(NONZERO_TOL).len(),
        zero_fraction,
        t_star: fit.projection_report.t_star,
        converged: selected.converged,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Runs every replicate of a scenario. Replicates run on the current rayon
/// pool; records come back in replicate order and failed replicates are
/// collected rather than aborting the scenario.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome> {
    config.validate()?;
    let shared = gen_graph(&config.graph)?;
    let results: Vec<(usize, Result<MetricsRecord>)> = (0..config.n_replicates)
        .into_par_iter()
        .map(|r| {
            let out = replicate_truth(config, &shared, r).and_then(|t| run_replicate(config, &t, r));
            (r, out)
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                failures.push(ReplicateFailure {
                    replicate: r,
                    replicate_seed: derive_seed(config.master_seed, r as u64),
                    error: e.to_string(),
                })
            }
        }
    }
    Ok(ScenarioOutcome {
        truth: shared,
        records,
        failures,
    })
}
