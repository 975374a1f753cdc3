//! Edge-recovery and estimation-error metrics against a known network.

use nalgebra::DMatrix;

use crate::dtrace::{PathResult, NONZERO_TOL};
use crate::error::{PlnError, Result};
use crate::model::{PrecisionEstimate, TrueNetwork};

/// Confusion counts over the upper-triangle off-diagonal pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_edges(edges: &[(usize, usize)], truth: &TrueNetwork) -> Confusion {
        let p = truth.p();
        let universe = p * p.saturating_sub(1) / 2;
        let positives = truth.support.len();
        let mut tp = 0;
        let mut fp = 0;
        for &(i, j) in edges {
            if truth.is_edge(i, j) {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        Confusion {
            tp,
            fp,
            fn_: positives - tp,
            tn: universe - positives - fp,
        }
    }

    pub fn recall(&self) -> f64 {
        let pos = self.tp + self.fn_;
        if pos == 0 {
            0.0
        } else {
            self.tp as f64 / pos as f64
        }
    }

    pub fn precision(&self) -> Option<f64> {
        let called = self.tp + self.fp;
        (called > 0).then(|| self.tp as f64 / called as f64)
    }

    pub fn fpr(&self) -> f64 {
        let neg = self.fp + self.tn;
        if neg == 0 {
            0.0
        } else {
            self.fp as f64 / neg as f64
        }
    }
}

fn check_dims(p: usize, truth: &TrueNetwork) -> Result<()> {
    if p != truth.p() {
        return Err(PlnError::DimensionMismatch(format!(
            "estimate is {p}x{p}, truth is {}x{}",
            truth.p(),
            truth.p()
        )));
    }
    Ok(())
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum()
}

/// Area under the precision-recall curve traced by a family of edge sets.
///
/// Sets with no called edges are skipped; the curve starts at recall 0 with
/// the precision of the lowest-recall point.
pub fn aupr_from_edge_sets<'a, I>(edge_sets: I, truth: &TrueNetwork) -> Result<f64>
where
    I: IntoIterator<Item = &'a [(usize, usize)]>,
{
    if truth.support.is_empty() {
        return Err(PlnError::EmptySupport);
    }
    let mut pts: Vec<(f64, f64)> = edge_sets
        .into_iter()
        .filter_map(|e| {
            let c = Confusion::from_edges(e, truth);
            c.precision().map(|prec| (c.recall(), prec))
        })
        .collect();
    if pts.is_empty() {
        return Ok(0.0);
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pts.insert(0, (0.0, pts[0].1));
    Ok(trapezoid(&pts))
}

/// Area under the ROC curve, with `(0, 0)` and `(1, 1)` appended.
pub fn auc_from_edge_sets<'a, I>(edge_sets: I, truth: &TrueNetwork) -> Result<f64>
where
    I: IntoIterator<Item = &'a [(usize, usize)]>,
{
    if truth.support.is_empty() {
        return Err(PlnError::EmptySupport);
    }
    let mut pts: Vec<(f64, f64)> = edge_sets
        .into_iter()
        .map(|e| {
            let c = Confusion::from_edges(e, truth);
            (c.fpr(), c.recall())
        })
        .collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(trapezoid(&pts))
}

fn path_edges(path: &PathResult, truth: &TrueNetwork) -> Result<Vec<Vec<(usize, usize)>>> {
    path.estimates
        .iter()
        .map(|e| {
            check_dims(e.p(), truth)?;
            Ok(e.edges(NONZERO_TOL))
        })
        .collect()
}

pub fn aupr(path: &PathResult, truth: &TrueNetwork) -> Result<f64> {
    let sets = path_edges(path, truth)?;
    aupr_from_edge_sets(sets.iter().map(Vec::as_slice), truth)
}

pub fn auc(path: &PathResult, truth: &TrueNetwork) -> Result<f64> {
    let sets = path_edges(path, truth)?;
    auc_from_edge_sets(sets.iter().map(Vec::as_slice), truth)
}

/// True positive rate and true discovery rate; the latter is `None` when no
/// edge is called.
pub fn tpr_tdr(theta_hat: &PrecisionEstimate, truth: &TrueNetwork) -> Result<(f64, Option<f64>)> {
    check_dims(theta_hat.p(), truth)?;
    let c = Confusion::from_edges(&theta_hat.edges(NONZERO_TOL), truth);
    Ok((c.recall(), c.precision()))
}

pub fn frobenius_risk(theta_hat: &PrecisionEstimate, truth: &TrueNetwork) -> Result<f64> {
    check_dims(theta_hat.p(), truth)?;
    Ok((&theta_hat.theta - &truth.theta).norm())
}

/// `-theta_jk / sqrt(theta_jj theta_kk)` with a unit diagonal.
pub fn partial_corr(theta: &PrecisionEstimate) -> Result<DMatrix<f64>> {
    let t = &theta.theta;
    let p = t.nrows();
    if let Some(j) = (0..p).find(|&j| !(t[(j, j)] > 0.0)) {
        return Err(PlnError::InvalidArgument(format!(
            "diagonal entry {j} is not positive ({})",
            t[(j, j)]
        )));
    }
    Ok(DMatrix::from_fn(p, p, |j, k| {
        if j == k {
            1.0
        } else {
            -t[(j, k)] / (t[(j, j)] * t[(k, k)]).sqrt()
        }
    }))
}
