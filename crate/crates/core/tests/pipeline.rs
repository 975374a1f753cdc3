use nalgebra::DMatrix;
use plnet::sim::{aupr, gen_graph, simulate_dataset, GraphFamily, GraphSpec};
use plnet::{
    estimate_lib_sizes, fit_network, CovEstimator, CovStage, LambdaChoice, PipelineOptions,
};

fn data(seed: u64) -> (plnet::TrueNetwork, plnet::CountMatrix) {
    let truth = gen_graph(&GraphSpec::new(GraphFamily::Banded, 15, 0)).unwrap();
    let sim = simulate_dataset(&truth.theta, 1500, -0.5, 0.2, seed).unwrap();
    let lib = estimate_lib_sizes(&sim.counts).unwrap();
    (truth, sim.counts.with_lib_sizes(lib).unwrap())
}

#[test]
fn shifted_and_projected_differ_by_the_radius() {
    let (_, y) = data(1);
    let base = PipelineOptions {
        lambda: LambdaChoice::Auto {
            grid_size: 10,
            ratio: 0.05,
        },
        ..Default::default()
    };
    let shifted = fit_network(&y, &base).unwrap();
    let projected = fit_network(
        &y,
        &PipelineOptions {
            cov_estimator: CovEstimator::Projected,
            ..base
        },
    )
    .unwrap();
    assert_eq!(shifted.sigma_hat.stage, CovStage::Shifted);
    assert_eq!(projected.sigma_hat.stage, CovStage::Projected);
    let t = shifted.projection_report.t_star;
    let diff = &shifted.sigma_hat.matrix - &projected.sigma_hat.matrix;
    let p = diff.nrows();
    let mut expected = projected.sigma_hat.matrix.clone();
    for i in 0..p {
        expected[(i, i)] += t;
    }
    assert_eq!(shifted.sigma_hat.matrix, expected);
    assert!((diff - DMatrix::<f64>::identity(p, p) * t).amax() < 1e-14);
    for fit in [&shifted, &projected] {
        let m = fit.sigma_hat.matrix.clone().symmetric_eigen().eigenvalues.min();
        assert!(m >= -1e-8);
    }
}

#[test]
fn recovers_a_small_band() {
    let (truth, y) = data(2);
    let fit = fit_network(&y, &PipelineOptions::default()).unwrap();
    assert_eq!(fit.path.len(), 50);
    assert!(aupr(&fit.path, &truth).unwrap() > 0.8);
    let names: Vec<&str> = fit.timings_ms.iter().map(|(s, _)| s.as_str()).collect();
    assert_eq!(names, ["moments", "projection", "dtrace"]);
}

#[test]
fn huge_fixed_penalty_gives_no_edges() {
    let (_, y) = data(3);
    let opts = PipelineOptions {
        lambda: LambdaChoice::Fixed(1e9),
        ..Default::default()
    };
    let fit = fit_network(&y, &opts).unwrap();
    assert_eq!(fit.path.len(), 1);
    assert!(fit.selected_estimate().edges(1e-8).is_empty());
    assert_eq!(fit.selected_lambda(), 1e9);
}
