//! Library side of the `plnet` command: argument definitions and the
//! subcommand implementations.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use plnet::sim::GraphFamily;
use plnet::{CovEstimator, PlnError};

mod bench;
mod eval;
mod fit;
mod io;
mod manifest;
mod simulate;

pub use io::InputError;

#[derive(Parser)]
#[command(name = "plnet", version, about = "Sparse network inference for count data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Draw counts from a Poisson log-normal model with a known network.
    Simulate(SimulateArgs),
    /// Estimate a sparse precision matrix from counts.
    Fit(FitArgs),
    /// Score an estimate against a known network.
    Eval(EvalArgs),
    /// Run simulation scenarios from a config file.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Family {
    Banded,
    Random,
    Scalefree,
    Blocked,
}

impl From<Family> for GraphFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Banded => GraphFamily::Banded,
            Family::Random => GraphFamily::Random,
            Family::Scalefree => GraphFamily::Scalefree,
            Family::Blocked => GraphFamily::Blocked,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum CovChoice {
    Shifted,
    Projected,
}

impl From<CovChoice> for CovEstimator {
    fn from(c: CovChoice) -> Self {
        match c {
            CovChoice::Shifted => CovEstimator::Shifted,
            CovChoice::Projected => CovEstimator::Projected,
        }
    }
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, env = "PLNET_GRAPH")]
    graph: Family,
    #[arg(long, env = "PLNET_P")]
    p: usize,
    #[arg(long, env = "PLNET_N")]
    n: usize,
    /// Common log-scale mean of every gene.
    #[arg(long, env = "PLNET_MU", allow_hyphen_values = true)]
    mu: f64,
    /// Standard deviation of log library sizes around log 10.
    #[arg(long, env = "PLNET_LIBSIZE_SD", default_value_t = 0.1)]
    libsize_sd: f64,
    #[arg(long, env = "PLNET_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "PLNET_OUT")]
    out: PathBuf,
    #[arg(long, env = "PLNET_EDGE_VALUE", default_value_t = 0.3, allow_hyphen_values = true)]
    edge_value: f64,
    #[arg(long, env = "PLNET_BAND_WIDTH", default_value_t = 2)]
    band_width: usize,
    #[arg(long, env = "PLNET_EDGE_PROB", default_value_t = 0.1)]
    edge_prob: f64,
    #[arg(long, env = "PLNET_NEG_PROB", default_value_t = 0.2)]
    neg_prob: f64,
    #[arg(long, env = "PLNET_BLOCKS", default_value_t = 5)]
    blocks: usize,
}

#[derive(Args)]
pub struct FitArgs {
    /// Cells-by-genes counts, `.csv` or `.mtx`.
    #[arg(long, env = "PLNET_INPUT")]
    input: PathBuf,
    /// `auto` (row sums) or a `cell_id,S` CSV file.
    #[arg(long, env = "PLNET_LIBSIZES", default_value = "auto")]
    libsizes: String,
    /// `auto` (grid plus BIC) or a fixed penalty.
    #[arg(long, env = "PLNET_LAMBDA", default_value = "auto")]
    lambda: String,
    #[arg(long, env = "PLNET_GRID", default_value_t = 50)]
    grid: usize,
    #[arg(long, env = "PLNET_GRID_RATIO", default_value_t = 0.01)]
    grid_ratio: f64,
    #[arg(long, value_enum, env = "PLNET_COV_ESTIMATOR", default_value = "shifted")]
    cov_estimator: CovChoice,
    #[arg(long, env = "PLNET_OUT")]
    out: PathBuf,
    #[arg(long, env = "PLNET_RHO", default_value_t = 1.0)]
    rho: f64,
    /// Primal and dual stopping tolerance.
    #[arg(long, env = "PLNET_TOL", default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, env = "PLNET_MAX_ITERS", default_value_t = 10000)]
    max_iters: usize,
    /// Input is genes-by-cells.
    #[arg(long, env = "PLNET_TRANSPOSE")]
    transpose: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    /// `theta.csv` or `path.json` from `fit`.
    #[arg(long, env = "PLNET_EST")]
    est: PathBuf,
    #[arg(long, env = "PLNET_TRUTH")]
    truth: PathBuf,
    /// Comma-separated subset of aupr, auc, tpr, tdr, frobenius.
    #[arg(long, env = "PLNET_METRICS", value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    #[arg(long, env = "PLNET_OUT")]
    out: PathBuf,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, env = "PLNET_CONFIG")]
    config: PathBuf,
    #[arg(long, env = "PLNET_OUT")]
    out: PathBuf,
    /// Override every scenario's replicate count.
    #[arg(long, env = "PLNET_REPLICATES")]
    replicates: Option<usize>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "PLNET_JOBS")]
    jobs: Option<usize>,
}

/// Process exit status for an error: 2 for bad input data, 3 when no fit
/// converged, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<InputError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<PlnError>() {
            return match e {
                PlnError::ZeroGenes { .. }
                | PlnError::EmptyRow { .. }
                | PlnError::NoData
                | PlnError::DimensionMismatch(_) => 2,
                PlnError::NoConvergedFit => 3,
                _ => 1,
            };
        }
    }
    1
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Bench(a) => bench::run(a),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}
