//! Simulation benchmark: ground-truth graphs, scenarios and scoring.

pub mod graphs;
pub mod metrics;
pub mod scenario;

pub use graphs::{gen_graph, make_pd, raw_graph, GraphFamily, GraphSpec};
pub use metrics::{
    auc, auc_from_edge_sets, aupr, aupr_from_edge_sets, frobenius_risk, partial_corr, tpr_tdr,
    Confusion,
};
pub use scenario::{
    derive_seed, run_replicate, run_scenario, simulate_dataset, MetricsRecord, ReplicateFailure,
    ScenarioConfig, ScenarioOutcome, SimulatedData,
};
