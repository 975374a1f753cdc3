use std::fs;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use plnet::dtrace::{lambda_max, NONZERO_TOL};
use plnet::sim::partial_corr;
use plnet::{estimate_lib_sizes, fit_network, AdmmOptions, LambdaChoice, PipelineOptions};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::io::{fmt_f64, read_counts, read_lib_sizes, write_file, write_matrix, InputError};
use crate::manifest::{file_digest, write_json, RunManifest};
use crate::FitArgs;

/// Everything `eval` needs to score a whole penalty path.
#[derive(Debug, Serialize, Deserialize)]
pub struct PathFile {
    pub genes: Vec<String>,
    pub n_cells: usize,
    pub cov_estimator: String,
    pub lambda_max: f64,
    pub degenerate_grid: bool,
    pub t_star: f64,
    pub selected: usize,
    pub lambdas: Vec<f64>,
    pub bic_scores: Vec<f64>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    pub kkt_residuals: Vec<f64>,
    /// Upper-triangle edges of each fit, zero-based.
    pub supports: Vec<Vec<(usize, usize)>>,
}

fn parse_lambda(s: &str, grid: usize, ratio: f64) -> Result<LambdaChoice> {
    if s == "auto" {
        return Ok(LambdaChoice::Auto {
            grid_size: grid,
            ratio,
        });
    }
    match s.parse::<f64>() {
        Ok(l) if l >= 0.0 && l.is_finite() => Ok(LambdaChoice::Fixed(l)),
        _ => bail!("--lambda must be `auto` or a nonnegative number, got {s:?}"),
    }
}

pub fn run(args: FitArgs) -> Result<()> {
    let lambda = parse_lambda(&args.lambda, args.grid, args.grid_ratio)?;
    let admm = AdmmOptions {
        rho: args.rho,
        tol_primal: args.tol,
        tol_dual: args.tol,
        max_iters: args.max_iters,
        ..AdmmOptions::default()
    };
    admm.validate()?;
    let opts = PipelineOptions {
        cov_estimator: args.cov_estimator.into(),
        lambda,
        admm,
        ..PipelineOptions::default()
    };

    let clock = Instant::now();
    let counts = read_counts(&args.input, args.transpose)?;
    let genes = counts.gene_labels();
    let zero = counts.zero_genes();
    if !zero.is_empty() {
        let names: Vec<&str> = zero.iter().map(|&j| genes[j].as_str()).collect();
        bail!(InputError(format!(
            "genes with no counts must be filtered before fitting: {}",
            names.join(", ")
        )));
    }
    let (lib_sizes, lib_source) = if args.libsizes == "auto" {
        (estimate_lib_sizes(&counts)?, "auto".to_string())
    } else {
        let path = std::path::Path::new(&args.libsizes);
        (read_lib_sizes(path, &counts)?, file_digest(path)?)
    };
    let data = counts.with_lib_sizes(lib_sizes)?;
    let read_ms = clock.elapsed().as_millis() as u64;

    let config = json!({
        "input_sha256": file_digest(&args.input)?,
        "transpose": args.transpose,
        "libsizes": lib_source,
        "lambda": args.lambda,
        "grid": args.grid,
        "grid_ratio": args.grid_ratio,
        "cov_estimator": opts.cov_estimator,
        "rho": args.rho,
        "tol": args.tol,
        "max_iters": args.max_iters,
    });
    let mut manifest = RunManifest::new("fit", config, None);
    manifest.timings_ms.insert("read".into(), read_ms);

    let fit = fit_network(&data, &opts)?;
    for (stage, ms) in &fit.timings_ms {
        manifest.timings_ms.insert(stage.clone(), *ms);
    }

    let diag = &fit.moment_diagnostics;
    if diag.n_clamped_entries > 0 {
        manifest.warn(format!(
            "{} moment entries were clamped at {:e} before the logarithm",
            diag.n_clamped_entries, diag.floor_value
        ));
    }
    if fit.degenerate_grid {
        manifest.warn("the diagonal fit is optimal for every penalty; fitted only lambda = 0");
    }
    let unconverged: Vec<String> = fit
        .path
        .estimates
        .iter()
        .filter(|e| !e.converged)
        .map(|e| format!("{:e}", e.lambda))
        .collect();
    if !unconverged.is_empty() {
        manifest.warn(format!("no convergence at lambda = {}", unconverged.join(", ")));
    }
    let selected = fit.selected_estimate();
    if !selected.converged {
        manifest.warn("the selected fit did not converge");
    }

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write_matrix(&args.out.join("theta.csv"), &genes, &selected.theta)?;

    let pc = partial_corr(selected)?;
    let mut edges = String::from("gene_i\tgene_j\ttheta_ij\tpartial_corr\n");
    for (i, j) in selected.edges(NONZERO_TOL) {
        edges.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            genes[i],
            genes[j],
            fmt_f64(selected.theta[(i, j)]),
            fmt_f64(pc[(i, j)])
        ));
    }
    write_file(&args.out.join("edges.tsv"), &edges)?;

    let path = &fit.path;
    let path_file = PathFile {
        genes: genes.clone(),
        n_cells: data.n(),
        cov_estimator: format!("{:?}", opts.cov_estimator).to_lowercase(),
        lambda_max: lambda_max(&fit.sigma_hat)?,
        degenerate_grid: fit.degenerate_grid,
        t_star: fit.projection_report.t_star,
        selected: fit.selected,
        lambdas: path.lambdas.clone(),
        bic_scores: path.bic_scores.clone(),
        converged: path.estimates.iter().map(|e| e.converged).collect(),
        iterations: path.estimates.iter().map(|e| e.iterations).collect(),
        kkt_residuals: path.estimates.iter().map(|e| e.kkt_residual).collect(),
        supports: path.estimates.iter().map(|e| e.edges(NONZERO_TOL)).collect(),
    };
    write_json(&args.out.join("path.json"), &path_file)?;

    let report = &fit.projection_report;
    manifest.summary = json!({
        "n_cells": data.n(),
        "n_genes": data.p(),
        "zero_fraction": data.zero_fraction(),
        "t_star": report.t_star,
        "projection_lower_bound": report.dual_bound,
        "selected_lambda": fit.selected_lambda(),
        "n_edges": selected.edges(NONZERO_TOL).len(),
        "clamped_pairs": diag.clamped_pairs,
    });
    manifest.write(&args.out)?;
    Ok(())
}
