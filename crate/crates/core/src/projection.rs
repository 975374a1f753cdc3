//! Repair of an indefinite covariance estimate: the closest positive
//! semidefinite matrix in the element-wise max norm, and the diagonally
//! shifted variant built from it.
//!
//! The max-norm projection first runs a primal-dual splitting that yields a
//! PSD witness and a dual lower bound on the optimal radius. If that bracket
//! is still wider than `tol_t`, bisection on the radius `t` takes over: for
//! each radius, Dykstra's alternating projections between the PSD cone and
//! the box `{A : |A - raw| <= t}` look for a PSD point inside the box.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{PlnError, Result};
use crate::linalg::{self, SymEigen};
use crate::model::{CovEstimate, CovStage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    /// Width of the final bisection bracket.
    pub tol_t: f64,
    /// Allowed box violation of the PSD witness.
    pub tol_inner: f64,
    /// Sweep budget per radius.
    pub max_inner: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            tol_t: 1e-6,
            tol_inner: 1e-8,
            max_inner: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionReport {
    /// Achieved `||projected - raw||_max`.
    pub t_star: f64,
    pub bisection_iters: usize,
    pub inner_iters_total: usize,
    /// Eigenvector lower bound on the optimal radius.
    pub lower_bound: f64,
    /// Best lower bound found, including the dual bound from the splitting.
    pub dual_bound: f64,
    /// `t_star - lower_bound`.
    pub certificate_gap: f64,
}

/// Lower bound on the optimal radius from the eigenvectors with negative
/// eigenvalues: any PSD `A` within max-distance `t` of `raw` has
/// `t >= -v^T raw v / ||v||_1^2`.
pub fn radius_lower_bound(eig: &SymEigen) -> f64 {
    let mut best = 0.0_f64;
    for (k, &d) in eig.values.iter().enumerate() {
        if d >= 0.0 {
            break;
        }
        let l1: f64 = eig.vectors.column(k).iter().map(|x| x.abs()).sum();
        best = best.max(-d / (l1 * l1));
    }
    best
}

/// Result of one radius test. `witness` is the PSD iterate closest to the
/// center seen during the sweeps, whether or not the radius was reached.
struct RadiusTest {
    feasible: bool,
    witness: DMatrix<f64>,
    witness_dist: f64,
}

struct Dykstra<'a> {
    center: &'a DMatrix<f64>,
    opts: &'a ProjectionOptions,
    sweeps: usize,
}

impl Dykstra<'_> {
    fn project_box(&self, z: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
        DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| {
            let c = self.center[(i, j)];
            c + (z[(i, j)] - c).clamp(-t, t)
        })
    }

    /// Looks for a PSD matrix within max-distance `t + slack` of the center.
    fn test(&mut self, t: f64) -> RadiusTest {
        let slack = self.opts.tol_inner.max(0.25 * self.opts.tol_t);
        const WINDOW: usize = 10;
        let mut x = self.center.clone();
        let n = x.nrows();
        let mut p_inc = DMatrix::<f64>::zeros(n, n);
        let mut q_inc = DMatrix::<f64>::zeros(n, n);
        let mut history: Vec<f64> = Vec::new();
        let mut best: Option<(f64, DMatrix<f64>)> = None;

        for k in 1..=self.opts.max_inner {
            self.sweeps += 1;
            let z = &x + &p_inc;
            let y = SymEigen::new(&z).reconstruct_with(|d| d.max(0.0));
            p_inc = z - &y;
            let w = &y + &q_inc;
            let x_next = self.project_box(&w, t);
            q_inc = w - &x_next;
            x = x_next;

            let dist = linalg::max_abs_diff(&y, self.center);
            let viol = (dist - t).max(0.0);
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, y));
            }
            if viol <= slack {
                break;
            }
            history.push(viol);
            // Give up once the observed contraction rate cannot reach the
            // tolerance within the remaining budget.
            if k >= 2 * WINDOW && k % WINDOW == 0 {
                let rate = viol / history[k - 1 - WINDOW];
                if rate >= 1.0 {
                    break;
                }
                let needed = WINDOW as f64 * (slack / viol).ln() / rate.ln();
                if (k as f64 + needed) > self.opts.max_inner as f64 {
                    break;
                }
            }
        }
        let (witness_dist, witness) = best.expect("at least one sweep");
        RadiusTest {
            feasible: witness_dist <= t + slack,
            witness,
            witness_dist,
        }
    }
}

/// Euclidean projection of `v` onto the l1 ball of the given radius.
fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cum += m;
        let candidate = (cum - radius) / (k + 1) as f64;
        if candidate >= m {
            break;
        }
        theta = candidate;
    }
    v.iter().map(|x| x.signum() * (x.abs() - theta).max(0.0)).collect()
}

/// Certified bracket on the optimal radius from a primal-dual splitting of
/// `min ||Z - raw||_max` subject to `X = Z`, `X` PSD.
struct Bracket {
    upper: f64,
    witness: DMatrix<f64>,
    lower: f64,
    iters: usize,
}

fn splitting_bracket(center: &DMatrix<f64>, start_upper: f64, opts: &ProjectionOptions) -> Bracket {
    let n = center.nrows();
    let mut z = center.clone();
    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut rho = 1.0 / (n * n) as f64 / start_upper.max(f64::MIN_POSITIVE);
    let mut best_upper = f64::INFINITY;
    let mut witness = center.clone();
    let mut lower = 0.0_f64;
    let mut iters = 0;

    while iters < opts.max_inner {
        iters += 1;
        let v = &z - &u;
        let x = SymEigen::new(&v).reconstruct_with(|d| d.max(0.0));

        // `x - v` is the PSD part of `-v`, a feasible dual direction.
        let w = &x - &v;
        let w_l1: f64 = w.iter().map(|a| a.abs()).sum();
        if w_l1 > 0.0 {
            lower = lower.max(-w.dot(center) / w_l1);
        }
        let dist = linalg::max_abs_diff(&x, center);
        if dist < best_upper {
            best_upper = dist;
            witness.copy_from(&x);
        }
        if best_upper - lower <= opts.tol_t {
            break;
        }

        let shifted = &x + &u - center;
        let tail = project_l1_ball(shifted.as_slice(), 1.0 / rho);
        let z_prev = std::mem::replace(
            &mut z,
            center + &shifted - DMatrix::from_vec(n, n, tail),
        );
        u += &x - &z;

        if iters % 10 == 0 {
            let primal = (&x - &z).norm();
            let dual = rho * (&z - &z_prev).norm();
            if primal > 10.0 * dual {
                rho *= 2.0;
                u /= 2.0;
            } else if dual > 10.0 * primal {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }
    Bracket {
        upper: best_upper,
        witness,
        lower,
        iters,
    }
}

/// Closest PSD matrix to `raw` in the element-wise max norm.
pub fn project_psd_inf(
    raw: &CovEstimate,
    opts: &ProjectionOptions,
) -> Result<(CovEstimate, ProjectionReport)> {
    if raw.stage != CovStage::Raw {
        return Err(PlnError::InvalidArgument(format!(
            "expected a raw covariance estimate, got {:?}",
            raw.stage
        )));
    }
    if !(opts.tol_t > 0.0 && opts.tol_inner > 0.0 && opts.max_inner >= 1) {
        return Err(PlnError::InvalidArgument("projection tolerances must be positive".into()));
    }
    let center = &raw.matrix;
    let scale = linalg::max_abs(center).max(1.0);
    linalg::check_symmetric(center, 1e-12 * scale)?;

    let eig = SymEigen::new(center);
    if eig.min() >= 0.0 {
        let report = ProjectionReport {
            t_star: 0.0,
            bisection_iters: 0,
            inner_iters_total: 0,
            lower_bound: 0.0,
            dual_bound: 0.0,
            certificate_gap: 0.0,
        };
        return Ok((
            CovEstimate {
                matrix: center.clone(),
                stage: CovStage::Projected,
                inf_gap: 0.0,
            },
            report,
        ));
    }

    let t_hi = -eig.min();
    let mut witness = center.clone();
    for i in 0..witness.nrows() {
        witness[(i, i)] += t_hi;
    }
    let mut hi = t_hi;
    let lower_bound = radius_lower_bound(&eig);
    let mut lo = lower_bound.min(hi);

    let bracket = splitting_bracket(center, t_hi, opts);
    if bracket.upper < hi {
        hi = bracket.upper;
        witness = bracket.witness;
    }
    lo = lo.max(bracket.lower.min(hi));

    let mut solver = Dykstra {
        center,
        opts,
        sweeps: 0,
    };
    let mut bisection_iters = 0;
    // The eigenvector bound is often tight, so the first probe sits just above it.
    let mut probe = lo + 0.5 * opts.tol_t;
    while hi - lo > opts.tol_t {
        bisection_iters += 1;
        let test = solver.test(probe);
        if test.witness_dist < hi {
            hi = test.witness_dist;
            witness = test.witness;
        }
        if !test.feasible {
            lo = lo.max(probe);
        }
        probe = 0.5 * (lo + hi);
    }

    linalg::symmetrize(&mut witness);
    let t_star = linalg::max_abs_diff(&witness, center);
    if t_star > t_hi + opts.tol_t {
        return Err(PlnError::Internal(format!(
            "projection radius {t_star} exceeds the diagonal repair radius {t_hi}"
        )));
    }
    let report = ProjectionReport {
        t_star,
        bisection_iters,
        inner_iters_total: bracket.iters + solver.sweeps,
        lower_bound,
        dual_bound: lo.min(t_star),
        certificate_gap: (t_star - lower_bound).max(0.0),
    };
    Ok((
        CovEstimate {
            matrix: witness,
            stage: CovStage::Projected,
            inf_gap: t_star,
        },
        report,
    ))
}

/// Adds `t_star * I` to the projected estimate.
pub fn shift_cov(projected: &CovEstimate, report: &ProjectionReport) -> Result<CovEstimate> {
    if projected.stage != CovStage::Projected {
        return Err(PlnError::InvalidArgument(format!(
            "expected a projected covariance estimate, got {:?}",
            projected.stage
        )));
    }
    let mut matrix = projected.matrix.clone();
    for i in 0..matrix.nrows() {
        matrix[(i, i)] += report.t_star;
    }
    Ok(CovEstimate {
        matrix,
        stage: CovStage::Shifted,
        inf_gap: report.t_star,
    })
}
