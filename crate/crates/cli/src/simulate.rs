use std::fs;
use std::time::Instant;

use anyhow::{Context, Result};
use plnet::sim::{gen_graph, simulate_dataset, GraphSpec};
use serde_json::json;

use crate::io::{write_counts, write_lib_sizes, write_matrix};
use crate::manifest::RunManifest;
use crate::SimulateArgs;

pub fn run(args: SimulateArgs) -> Result<()> {
    let spec = GraphSpec {
        family: args.graph.into(),
        p: args.p,
        seed: args.seed,
        edge_value: args.edge_value,
        band_width: args.band_width,
        edge_prob: args.edge_prob,
        neg_prob: args.neg_prob,
        n_blocks: args.blocks,
    };
    spec.validate()?;
    if args.n < 1 {
        anyhow::bail!("--n must be at least 1");
    }
    if !(args.libsize_sd >= 0.0 && args.libsize_sd.is_finite()) {
        anyhow::bail!("--libsize-sd must be a nonnegative number");
    }
    let config = json!({
        "graph": spec,
        "n": args.n,
        "mu": args.mu,
        "libsize_sd": args.libsize_sd,
    });
    let mut manifest = RunManifest::new("simulate", config, Some(args.seed));

    let clock = Instant::now();
    let truth = gen_graph(&spec)?;
    let sim = simulate_dataset(&truth.theta, args.n, args.mu, args.libsize_sd, args.seed)?;
    manifest.timings_ms.insert("simulate".into(), clock.elapsed().as_millis() as u64);

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let counts = &sim.counts;
    write_counts(&args.out.join("counts.csv"), counts)?;
    write_lib_sizes(&args.out.join("libsizes.csv"), &counts.cell_labels(), counts.lib_sizes())?;
    write_matrix(&args.out.join("truth.csv"), &counts.gene_labels(), &truth.theta)?;

    let zero_fraction = counts.zero_fraction();
    let diag_shift = truth.theta[(0, 0)] - 1.0;
    manifest.summary = json!({
        "zero_fraction": zero_fraction,
        "n_true_edges": truth.support.len(),
        "diagonal_shift": diag_shift,
        "zero_genes": counts.zero_genes(),
    });
    if !counts.zero_genes().is_empty() {
        manifest.warn(format!(
            "{} genes have no counts and cannot be fitted",
            counts.zero_genes().len()
        ));
    }
    manifest.write(&args.out)?;
    Ok(())
}
