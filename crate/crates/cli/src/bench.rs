use std::collections::BTreeSet;
use std::fs;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use plnet::sim::{run_scenario, ScenarioConfig};
use serde::Deserialize;
use serde_json::json;

use crate::io::{fmt_f64, InputError};
use crate::manifest::{write_json, RunManifest};
use crate::BenchArgs;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchConfig {
    schema: u32,
    scenarios: Vec<ScenarioConfig>,
}

/// Accepts `{"schema": 1, "scenarios": [...]}` or a bare list of scenarios.
fn parse_config(text: &str) -> std::result::Result<Vec<ScenarioConfig>, String> {
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(text).map_err(|e| e.to_string());
    }
    let cfg: BenchConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if cfg.schema != 1 {
        return Err(format!("unsupported schema version {}", cfg.schema));
    }
    Ok(cfg.scenarios)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, f64::NAN);
    }
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (m, (ss / (n - 1) as f64).sqrt())
}

fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => fmt_f64(v),
        _ => String::new(),
    }
}

pub fn run(args: BenchArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read {}", args.config.display()))?;
    let mut scenarios =
        parse_config(&text).map_err(|e| InputError(format!("{}: {e}", args.config.display())))?;
    if scenarios.is_empty() {
        bail!(InputError(format!("{}: no scenarios", args.config.display())));
    }
    let mut seen = BTreeSet::new();
    for (k, sc) in scenarios.iter_mut().enumerate() {
        if sc.id.is_none() {
            sc.id = Some(format!("scenario{}", k + 1));
        }
        if let Some(r) = args.replicates {
            sc.n_replicates = r;
        }
        let id = sc.id.clone().unwrap_or_default();
        sc.validate().with_context(|| format!("scenario {id}"))?;
        if !seen.insert(id.clone()) {
            bail!(InputError(format!("duplicate scenario id {id:?}")));
        }
    }

    let config = json!({
        "scenarios": scenarios,
        "replicates_override": args.replicates,
    });
    let mut manifest = RunManifest::new("bench", config, None);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build()?;

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut results = csv::Writer::from_path(args.out.join("results.csv"))?;
    results.write_record([
        "scenario", "replicate", "seed", "aupr", "auc", "tpr", "tdr", "frobenius_risk",
        "lambda_bic", "n_edges", "zero_fraction", "converged", "wall_ms",
    ])?;
    let mut summary = csv::Writer::from_path(args.out.join("summary.csv"))?;
    let stats = ["aupr", "auc", "tpr", "tdr", "frobenius_risk"];
    let mut header = vec!["scenario".to_string(), "replicates".into(), "failures".into()];
    for s in stats {
        header.push(format!("{s}_mean"));
        header.push(format!("{s}_sd"));
    }
    header.extend(stats.iter().map(|s| s.to_string()));
    summary.write_record(&header)?;

    let mut failures_json = Vec::new();
    for sc in &scenarios {
        let id = sc.id.clone().unwrap_or_default();
        let clock = Instant::now();
        let outcome = pool.install(|| run_scenario(sc))?;
        manifest.timings_ms.insert(id.clone(), clock.elapsed().as_millis() as u64);
        log::info!("{id}: {} replicates, mean aupr {:.3}", outcome.records.len(), outcome.mean_aupr());

        for r in &outcome.records {
            results.write_record([
                id.clone(),
                r.replicate.to_string(),
                r.replicate_seed.to_string(),
                fmt_f64(r.aupr),
                fmt_f64(r.auc),
                fmt_f64(r.tpr),
                cell(r.tdr),
                fmt_f64(r.frobenius_risk),
                fmt_f64(r.lambda_bic),
                r.n_edges_est.to_string(),
                fmt_f64(r.zero_fraction),
                r.converged.to_string(),
                r.wall_ms.to_string(),
            ])?;
        }
        for f in &outcome.failures {
            manifest.warn(format!("{id} replicate {} failed: {}", f.replicate, f.error));
            failures_json.push(json!({
                "scenario": id, "replicate": f.replicate, "seed": f.replicate_seed, "error": f.error,
            }));
        }

        let recs = &outcome.records;
        let columns: [Vec<f64>; 5] = [
            recs.iter().map(|r| r.aupr).collect(),
            recs.iter().map(|r| r.auc).collect(),
            recs.iter().map(|r| r.tpr).collect(),
            recs.iter().filter_map(|r| r.tdr).collect(),
            recs.iter().map(|r| r.frobenius_risk).collect(),
        ];
        let mut row = vec![id.clone(), recs.len().to_string(), outcome.failures.len().to_string()];
        let mut pretty = Vec::new();
        for xs in &columns {
            let (m, sd) = mean_sd(xs);
            row.push(cell(Some(m)));
            row.push(cell(Some(sd)));
            pretty.push(match (m.is_finite(), sd.is_finite()) {
                (true, true) => format!("{m:.2} ({sd:.2})"),
                (true, false) => format!("{m:.2}"),
                _ => String::new(),
            });
        }
        row.extend(pretty);
        summary.write_record(&row)?;
    }
    results.flush()?;
    summary.flush()?;

    manifest.summary = json!({
        "n_scenarios": scenarios.len(),
        "failures": failures_json,
    });
    manifest.write(&args.out)?;
    if !failures_json.is_empty() {
        write_json(&args.out.join("failures.json"), &failures_json)?;
    }
    Ok(())
}
