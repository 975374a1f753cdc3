use std::collections::BTreeMap;
use std::fs;

use anyhow::{bail, Context, Result};
use plnet::sim::{
    auc_from_edge_sets, aupr_from_edge_sets, frobenius_risk, tpr_tdr, Confusion,
};
use plnet::{PrecisionEstimate, TrueNetwork};
use serde_json::Value;

use crate::fit::PathFile;
use crate::io::{read_matrix, InputError};
use crate::manifest::write_json;
use crate::EvalArgs;

const ALL: [&str; 5] = ["aupr", "auc", "tpr", "tdr", "frobenius"];

enum Estimate {
    Point(PrecisionEstimate),
    Path(PathFile),
}

fn load_estimate(path: &std::path::Path) -> Result<Estimate> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let pf: PathFile = serde_json::from_str(&text)
                .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
            let k = pf.lambdas.len();
            if k == 0 || pf.supports.len() != k || pf.selected >= k {
                bail!(InputError(format!("{}: inconsistent path lengths", path.display())));
            }
            Ok(Estimate::Path(pf))
        }
        Some("csv") => Ok(Estimate::Point(PrecisionEstimate::from_matrix(read_matrix(path)?.1))),
        _ => bail!(InputError(format!(
            "{}: expected theta.csv or path.json",
            path.display()
        ))),
    }
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, Value::from)
}

pub fn run(args: EvalArgs) -> Result<()> {
    let (_, truth_theta) = read_matrix(&args.truth)?;
    let truth = TrueNetwork::new(truth_theta)?;
    let p = truth.p();
    let est = load_estimate(&args.est)?;

    let requested: Vec<String> = match args.metrics {
        Some(m) => m.iter().map(|s| s.trim().to_lowercase()).filter(|s| !s.is_empty()).collect(),
        None => match est {
            Estimate::Path(_) => vec!["aupr".into(), "auc".into(), "tpr".into(), "tdr".into()],
            Estimate::Point(_) => vec!["tpr".into(), "tdr".into(), "frobenius".into()],
        },
    };
    if let Some(bad) = requested.iter().find(|m| !ALL.contains(&m.as_str())) {
        bail!("unknown metric {bad:?}; choose from {}", ALL.join(", "));
    }

    let mut out: BTreeMap<String, Value> = BTreeMap::new();
    match &est {
        Estimate::Point(theta) => {
            if theta.p() != p {
                bail!(InputError(format!("estimate is {}x{0}, truth is {p}x{p}", theta.p())));
            }
            let (tpr, tdr) = tpr_tdr(theta, &truth)?;
            for m in &requested {
                let v = match m.as_str() {
                    "tpr" => Value::from(tpr),
                    "tdr" => opt(tdr),
                    "frobenius" => Value::from(frobenius_risk(theta, &truth)?),
                    _ => bail!("{m} needs the whole path; pass path.json from `fit`"),
                };
                out.insert(m.clone(), v);
            }
        }
        Estimate::Path(pf) => {
            if pf.genes.len() != p {
                bail!(InputError(format!("path has {} genes, truth has {p}", pf.genes.len())));
            }
            if pf.supports.iter().flatten().any(|&(i, j)| i >= j || j >= p) {
                bail!(InputError("path.json holds an invalid edge".into()));
            }
            let sets = || pf.supports.iter().map(Vec::as_slice);
            let chosen = Confusion::from_edges(&pf.supports[pf.selected], &truth);
            for m in &requested {
                let v = match m.as_str() {
                    "aupr" => Value::from(aupr_from_edge_sets(sets(), &truth)?),
                    "auc" => Value::from(auc_from_edge_sets(sets(), &truth)?),
                    "tpr" => Value::from(chosen.recall()),
                    "tdr" => opt(chosen.precision()),
                    _ => bail!("{m} needs matrix values; pass theta.csv from `fit`"),
                };
                out.insert(m.clone(), v);
            }
        }
    }
    write_json(&args.out, &out)?;
    Ok(())
}
