//! Lasso-penalized D-trace estimation of a sparse precision matrix:
//!
//! `min_{Theta ⪰ eps I}  ½ tr(Theta S Theta) - tr(Theta) + lambda * sum_{j != k} |Theta_jk|`
//!
//! solved by a three-block ADMM with copies `T0 = T1 = T2`. `T0` carries the
//! smooth loss (a Sylvester-type solve diagonalized by the eigenbasis of `S`),
//! `T1` the off-diagonal soft threshold and `T2` the eigenvalue floor.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{PlnError, Result};
use crate::linalg::{self, SymEigen};
use crate::model::{CovEstimate, PrecisionEstimate};

/// Entries with magnitude above this count as nonzero.
pub const NONZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmmOptions {
    pub rho: f64,
    /// Lower eigenvalue bound imposed on the estimate.
    pub eps_pd: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iters: usize,
    /// Doubles or halves `rho` when the primal and dual residuals drift
    /// apart by more than a factor of ten.
    pub adaptive_rho: bool,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            rho: 1.0,
            eps_pd: 1e-8,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            max_iters: 10_000,
            adaptive_rho: true,
        }
    }
}

impl AdmmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0
            && self.eps_pd >= 0.0
            && self.tol_primal > 0.0
            && self.tol_dual > 0.0
            && self.max_iters >= 1)
        {
            return Err(PlnError::InvalidArgument(format!(
                "invalid ADMM options: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Full ADMM state, used to warm-start the next penalty on a path.
#[derive(Debug, Clone)]
pub struct AdmmState {
    t0: DMatrix<f64>,
    t1: DMatrix<f64>,
    t2: DMatrix<f64>,
    dual1: DMatrix<f64>,
    dual2: DMatrix<f64>,
    rho: f64,
}

/// `½ tr(Theta S Theta) - tr(Theta) + lambda ||Theta||_{1,off}`.
pub fn dtrace_objective(theta: &DMatrix<f64>, sigma: &DMatrix<f64>, lambda: f64) -> f64 {
    let quad = 0.5 * (theta * sigma).component_mul(theta).sum();
    let off: f64 = theta
        .iter()
        .enumerate()
        .filter(|(idx, _)| idx % theta.nrows() != idx / theta.nrows())
        .map(|(_, v)| v.abs())
        .sum();
    quad - theta.trace() + lambda * off
}

/// `½(S Theta + Theta S) - I`, the gradient of the smooth part.
pub fn stationarity_residual(theta: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let st = sigma * theta;
    let mut r = 0.5 * (&st + st.transpose());
    for i in 0..r.nrows() {
        r[(i, i)] -= 1.0;
    }
    r
}

/// Worst violation of the interior optimality conditions.
///
/// Only a certificate when the smallest eigenvalue of `theta` is strictly
/// above the cone floor.
pub fn kkt_residual(theta: &PrecisionEstimate, sigma_hat: &CovEstimate, lambda: f64) -> f64 {
    kkt_residual_raw(&theta.theta, &sigma_hat.matrix, lambda)
}

pub(crate) fn kkt_residual_raw(theta: &DMatrix<f64>, sigma: &DMatrix<f64>, lambda: f64) -> f64 {
    let r = stationarity_residual(theta, sigma);
    let p = theta.nrows();
    let mut worst = 0.0_f64;
    for j in 0..p {
        for k in 0..p {
            let v = if j == k {
                r[(j, j)].abs()
            } else if theta[(j, k)] != 0.0 {
                (r[(j, k)] + lambda * theta[(j, k)].signum()).abs()
            } else {
                (r[(j, k)].abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// A covariance estimate prepared for repeated D-trace fits.
///
/// Holds the single eigendecomposition reused by every penalty and iteration.
#[derive(Debug, Clone)]
pub struct DtraceProblem {
    sigma: DMatrix<f64>,
    eig: SymEigen,
}

impl DtraceProblem {
    pub fn new(sigma_hat: &CovEstimate) -> Result<Self> {
        let sigma = sigma_hat.matrix.clone();
        linalg::check_square(&sigma, "covariance")?;
        linalg::check_symmetric(&sigma, 1e-10 * linalg::max_abs(&sigma).max(1.0))?;
        let eig = SymEigen::new(&sigma);
        if eig.min() < -1e-8 * eig.max().abs().max(1.0) {
            return Err(PlnError::NotPositiveSemidefinite {
                min_eigenvalue: eig.min(),
            });
        }
        Ok(DtraceProblem { sigma, eig })
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    fn cold_state(&self, rho: f64) -> AdmmState {
        let p = self.p();
        let diag = DVector::from_fn(p, |j, _| {
            let s = self.sigma[(j, j)];
            if s > 0.0 {
                1.0 / s
            } else {
                1.0
            }
        });
        let t = DMatrix::from_diagonal(&diag);
        self.state_from_theta(&t, rho)
    }

    /// Duals chosen so that `T0 = T1 = T2 = theta` is a fixed point when
    /// `theta` is optimal and interior.
    fn state_from_theta(&self, theta: &DMatrix<f64>, rho: f64) -> AdmmState {
        let dual1 = -stationarity_residual(theta, &self.sigma);
        AdmmState {
            t0: theta.clone(),
            t1: theta.clone(),
            t2: theta.clone(),
            dual1,
            dual2: DMatrix::zeros(theta.nrows(), theta.ncols()),
            rho,
        }
    }

    /// Solves `½(S X + X S) + 2 rho X = B` in the eigenbasis of `S`.
    fn solve_quadratic(&self, b: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
        let u = &self.eig.vectors;
        let d = &self.eig.values;
        let mut bt = u.tr_mul(&(b * u));
        let p = self.p();
        for k in 0..p {
            for j in 0..p {
                bt[(j, k)] /= 0.5 * (d[j] + d[k]) + 2.0 * rho;
            }
        }
        let mut x = (u * bt) * u.transpose();
        linalg::symmetrize(&mut x);
        x
    }

    /// Fits one penalty, optionally from a previous state.
    pub fn fit_with_state(
        &self,
        lambda: f64,
        opts: &AdmmOptions,
        warm: Option<AdmmState>,
    ) -> Result<(PrecisionEstimate, AdmmState)> {
        opts.validate()?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(PlnError::InvalidArgument(format!(
                "penalty must be a nonnegative number, got {lambda}"
            )));
        }
        let p = self.p();
        let mut st = warm.unwrap_or_else(|| self.cold_state(opts.rho));
        if st.t0.nrows() != p {
            return Err(PlnError::DimensionMismatch(format!(
                "warm start is {}x{}, problem is {p}x{p}",
                st.t0.nrows(),
                st.t0.ncols()
            )));
        }
        let mut converged = false;
        let mut iterations = 0;
        let ident = DMatrix::<f64>::identity(p, p);

        for it in 1..=opts.max_iters {
            iterations = it;
            let rho = st.rho;
            let b = &ident + (&st.t1 + &st.t2) * rho - &st.dual1 - &st.dual2;
            st.t0 = self.solve_quadratic(&b, rho);

            let thr = lambda / rho;
            let mut t1 = &st.t0 + &st.dual1 / rho;
            for k in 0..p {
                for j in 0..p {
                    if j != k {
                        let v = t1[(j, k)];
                        t1[(j, k)] = v.signum() * (v.abs() - thr).max(0.0);
                    }
                }
            }
            let t2 = linalg::project_psd_floor(&(&st.t0 + &st.dual2 / rho), opts.eps_pd);

            let d1 = &st.t0 - &t1;
            let d2 = &st.t0 - &t2;
            st.dual1 += &d1 * rho;
            st.dual2 += &d2 * rho;

            let r_primal = linalg::max_abs(&d1).max(linalg::max_abs(&d2));
            let r_dual = rho * linalg::max_abs_diff(&t1, &st.t1).max(linalg::max_abs_diff(&t2, &st.t2));
            st.t1 = t1;
            st.t2 = t2;

            if r_primal < opts.tol_primal && r_dual < opts.tol_dual {
                converged = true;
                break;
            }
            if opts.adaptive_rho && it % 10 == 0 {
                if r_primal > 10.0 * r_dual {
                    st.rho = rho * 2.0;
                } else if r_dual > 10.0 * r_primal {
                    st.rho = rho / 2.0;
                }
            }
        }

        let theta = st.t1.clone();
        let kkt = kkt_residual_raw(&theta, &self.sigma, lambda);
        Ok((
            PrecisionEstimate {
                theta,
                lambda,
                converged,
                iterations,
                kkt_residual: kkt,
            },
            st,
        ))
    }

    pub fn fit(
        &self,
        lambda: f64,
        opts: &AdmmOptions,
        warm_start: Option<&PrecisionEstimate>,
    ) -> Result<PrecisionEstimate> {
        let warm = match warm_start {
            Some(w) => {
                if w.p() != self.p() {
                    return Err(PlnError::DimensionMismatch(format!(
                        "warm start has dimension {}, problem has {}",
                        w.p(),
                        self.p()
                    )));
                }
                let mut theta = w.theta.clone();
                linalg::symmetrize(&mut theta);
                Some(self.state_from_theta(&theta, opts.rho))
            }
            None => None,
        };
        self.fit_with_state(lambda, opts, warm).map(|(est, _)| est)
    }
}

/// Fits a single penalty.
pub fn dtrace_fit(
    sigma_hat: &CovEstimate,
    lambda: f64,
    opts: &AdmmOptions,
    warm_start: Option<&PrecisionEstimate>,
) -> Result<PrecisionEstimate> {
    DtraceProblem::new(sigma_hat)?.fit(lambda, opts, warm_start)
}

/// Log-spaced penalties from the smallest all-diagonal penalty downwards.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
    pub lambda_max: f64,
}

impl LambdaGrid {
    /// A zero `lambda_max` means the diagonal fit is already optimal at every
    /// penalty; the grid is then all zeros.
    pub fn is_degenerate(&self) -> bool {
        self.lambda_max <= 0.0
    }
}

/// Smallest penalty at which `diag(1 / S_jj)` satisfies the off-diagonal
/// optimality conditions.
pub fn lambda_max(sigma_hat: &CovEstimate) -> Result<f64> {
    let s = &sigma_hat.matrix;
    linalg::check_square(s, "covariance")?;
    let p = s.nrows();
    if let Some(j) = (0..p).find(|&j| s[(j, j)] == 0.0) {
        return Err(PlnError::InvalidArgument(format!(
            "covariance has a zero diagonal entry at {j}"
        )));
    }
    let mut worst = 0.0_f64;
    for j in 0..p {
        for k in 0..p {
            if j != k {
                let v = 0.5 * s[(j, k)] * (1.0 / s[(j, j)] + 1.0 / s[(k, k)]);
                worst = worst.max(v.abs());
            }
        }
    }
    Ok(worst)
}

pub fn lambda_grid(sigma_hat: &CovEstimate, k: usize, ratio: f64) -> Result<LambdaGrid> {
    if k < 2 {
        return Err(PlnError::InvalidArgument("grid needs at least two values".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PlnError::InvalidArgument(format!(
            "grid ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let top = lambda_max(sigma_hat)?;
    let values = if top <= 0.0 {
        vec![0.0; k]
    } else {
        let step = ratio.ln() / (k - 1) as f64;
        let mut v: Vec<f64> = (0..k).map(|i| top * (step * i as f64).exp()).collect();
        v[0] = top;
        v[k - 1] = top * ratio;
        v
    };
    Ok(LambdaGrid {
        values,
        lambda_max: top,
    })
}

/// `||½(Theta S + S Theta) - I||_F + ||Theta||_0 log(n) / n`.
///
/// The nonzero count includes the diagonal.
pub fn bic_score(theta: &PrecisionEstimate, sigma_hat: &CovEstimate, n: usize) -> f64 {
    bic_score_raw(&theta.theta, &sigma_hat.matrix, n)
}

fn bic_score_raw(theta: &DMatrix<f64>, sigma: &DMatrix<f64>, n: usize) -> f64 {
    let fit = stationarity_residual(theta, sigma).norm();
    let nnz = theta.iter().filter(|v| v.abs() > NONZERO_TOL).count();
    let n = n as f64;
    fit + nnz as f64 * n.ln() / n
}

/// Fits along a decreasing penalty grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub lambdas: Vec<f64>,
    pub estimates: Vec<PrecisionEstimate>,
    pub bic_scores: Vec<f64>,
}

impl PathResult {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

/// Fits every penalty in `grid` (strictly decreasing), warm-starting each from
/// the previous one, and scores them.
pub fn fit_path(
    sigma_hat: &CovEstimate,
    grid: &[f64],
    opts: &AdmmOptions,
    n: usize,
) -> Result<PathResult> {
    if grid.is_empty() {
        return Err(PlnError::InvalidArgument("empty penalty grid".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(PlnError::InvalidArgument(
            "penalty grid must be strictly decreasing".into(),
        ));
    }
    if n < 2 {
        return Err(PlnError::InvalidArgument("BIC needs n >= 2".into()));
    }
    let problem = DtraceProblem::new(sigma_hat)?;
    let mut estimates = Vec::with_capacity(grid.len());
    let mut bic_scores = Vec::with_capacity(grid.len());
    let mut state: Option<AdmmState> = None;
    for &lambda in grid {
        let (est, st) = problem.fit_with_state(lambda, opts, state.take())?;
        if !est.converged {
            log::warn!("D-trace fit at lambda={lambda:e} did not converge");
        }
        bic_scores.push(bic_score_raw(&est.theta, problem.sigma(), n));
        estimates.push(est);
        state = Some(st);
    }
    Ok(PathResult {
        lambdas: grid.to_vec(),
        estimates,
        bic_scores,
    })
}

/// Entry with the smallest BIC; ties go to the larger penalty.
pub fn select_bic(path: &PathResult) -> Result<(f64, PrecisionEstimate)> {
    select_bic_index(path).map(|i| (path.lambdas[i], path.estimates[i].clone()))
}

pub fn select_bic_index(path: &PathResult) -> Result<usize> {
    if path.is_empty() {
        return Err(PlnError::InvalidArgument("empty path".into()));
    }
    if path.estimates.iter().all(|e| !e.converged) {
        return Err(PlnError::NoConvergedFit);
    }
    let mut best = 0;
    for (i, &s) in path.bic_scores.iter().enumerate() {
        if s < path.bic_scores[best] {
            best = i;
        }
    }
    Ok(best)
}
