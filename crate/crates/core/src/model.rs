//! Domain types, the Poisson log-normal sampler, its closed-form moments and
//! library-size estimation.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PlnError, Result};
use crate::linalg::{self, SymEigen};

/// Rates above this are rejected by the sampler.
pub const MAX_LATENT_RATE: f64 = 1e12;

/// Observed counts (cells as rows, genes as columns) with per-cell library sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    n: usize,
    p: usize,
    counts: Vec<u64>,
    lib_sizes: Vec<f64>,
    gene_names: Option<Vec<String>>,
    cell_ids: Option<Vec<String>>,
}

impl CountMatrix {
    /// Builds a count matrix from row-major counts.
    pub fn new(n: usize, p: usize, counts: Vec<u64>, lib_sizes: Vec<f64>) -> Result<Self> {
        if counts.len() != n * p {
            return Err(PlnError::DimensionMismatch(format!(
                "{} counts for a {n}x{p} matrix",
                counts.len()
            )));
        }
        if lib_sizes.len() != n {
            return Err(PlnError::DimensionMismatch(format!(
                "{} library sizes for {n} rows",
                lib_sizes.len()
            )));
        }
        if let Some((i, s)) = lib_sizes
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && **s > 0.0))
        {
            return Err(PlnError::InvalidArgument(format!(
                "library size of row {i} must be positive, got {s}"
            )));
        }
        Ok(CountMatrix {
            n,
            p,
            counts,
            lib_sizes,
            gene_names: None,
            cell_ids: None,
        })
    }

    /// Builds a count matrix with unit placeholder library sizes, to be
    /// replaced by [`CountMatrix::with_lib_sizes`].
    pub fn from_counts(n: usize, p: usize, counts: Vec<u64>) -> Result<Self> {
        Self::new(n, p, counts, vec![1.0; n])
    }

    pub fn from_rows(rows: &[Vec<u64>], lib_sizes: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != p) {
            return Err(PlnError::DimensionMismatch(format!(
                "row {i} has {} entries, expected {p}",
                rows[i].len()
            )));
        }
        Self::new(n, p, rows.concat(), lib_sizes)
    }

    pub fn with_lib_sizes(self, lib_sizes: Vec<f64>) -> Result<Self> {
        let CountMatrix {
            n,
            p,
            counts,
            gene_names,
            cell_ids,
            ..
        } = self;
        let mut out = CountMatrix::new(n, p, counts, lib_sizes)?;
        out.gene_names = gene_names;
        out.cell_ids = cell_ids;
        Ok(out)
    }

    pub fn with_gene_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p {
            return Err(PlnError::DimensionMismatch(format!(
                "{} gene names for {} columns",
                names.len(),
                self.p
            )));
        }
        self.gene_names = Some(names);
        Ok(self)
    }

    pub fn with_cell_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(PlnError::DimensionMismatch(format!(
                "{} cell ids for {} rows",
                ids.len(),
                self.n
            )));
        }
        self.cell_ids = Some(ids);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.counts[i * self.p..(i + 1) * self.p]
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.p + j]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn lib_sizes(&self) -> &[f64] {
        &self.lib_sizes
    }

    pub fn gene_names(&self) -> Option<&[String]> {
        self.gene_names.as_deref()
    }

    pub fn cell_ids(&self) -> Option<&[String]> {
        self.cell_ids.as_deref()
    }

    /// Gene names, falling back to `g1..gp`.
    pub fn gene_labels(&self) -> Vec<String> {
        match &self.gene_names {
            Some(names) => names.clone(),
            None => (1..=self.p).map(|j| format!("g{j}")).collect(),
        }
    }

    /// Cell ids, falling back to `c1..cn`.
    pub fn cell_labels(&self) -> Vec<String> {
        match &self.cell_ids {
            Some(ids) => ids.clone(),
            None => (1..=self.n).map(|i| format!("c{i}")).collect(),
        }
    }

    /// Fraction of entries equal to zero.
    pub fn zero_fraction(&self) -> f64 {
        if self.counts.is_empty() {
            return 0.0;
        }
        self.counts.iter().filter(|&&y| y == 0).count() as f64 / self.counts.len() as f64
    }

    /// Indices of genes whose column is entirely zero.
    pub fn zero_genes(&self) -> Vec<usize> {
        let mut seen = vec![false; self.p];
        for row in self.counts.chunks_exact(self.p.max(1)) {
            for (j, &y) in row.iter().enumerate() {
                seen[j] |= y > 0;
            }
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| !s)
            .map(|(j, _)| j)
            .collect()
    }

    /// Splits the rows into consecutive blocks of at most `rows` rows.
    pub fn row_chunks(&self, rows: usize) -> Vec<CountMatrix> {
        let rows = rows.max(1);
        (0..self.n)
            .step_by(rows)
            .map(|start| {
                let end = (start + rows).min(self.n);
                CountMatrix {
                    n: end - start,
                    p: self.p,
                    counts: self.counts[start * self.p..end * self.p].to_vec(),
                    lib_sizes: self.lib_sizes[start..end].to_vec(),
                    gene_names: self.gene_names.clone(),
                    cell_ids: self.cell_ids.as_ref().map(|ids| ids[start..end].to_vec()),
                }
            })
            .collect()
    }

    /// Swaps the roles of rows and columns. Library sizes reset to 1.
    pub fn transposed(&self) -> CountMatrix {
        let mut counts = vec![0; self.n * self.p];
        for i in 0..self.n {
            for j in 0..self.p {
                counts[j * self.n + i] = self.counts[i * self.p + j];
            }
        }
        CountMatrix {
            n: self.p,
            p: self.n,
            counts,
            lib_sizes: vec![1.0; self.p],
            gene_names: self.cell_ids.clone(),
            cell_ids: self.gene_names.clone(),
        }
    }
}

/// Mean and covariance of the latent log-scale normal layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentParams {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl LatentParams {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        linalg::check_square(&sigma, "sigma")?;
        if mu.len() != sigma.nrows() {
            return Err(PlnError::DimensionMismatch(format!(
                "mu has length {}, sigma is {}x{}",
                mu.len(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        linalg::check_symmetric(&sigma, 1e-12)?;
        Ok(LatentParams { mu, sigma })
    }

    /// Constant mean `level` with covariance `theta^{-1}`.
    pub fn from_precision(level: f64, theta: &DMatrix<f64>) -> Result<Self> {
        let sigma = linalg::spd_inverse(theta)?;
        Self::new(DVector::from_element(theta.nrows(), level), sigma)
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }
}

/// Which step of the covariance pipeline produced a [`CovEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovStage {
    Raw,
    Projected,
    Shifted,
}

/// A latent-covariance estimate together with the stage that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    pub matrix: DMatrix<f64>,
    pub stage: CovStage,
    /// Max-norm distance between the projected and the raw estimate; zero for raw.
    pub inf_gap: f64,
}

impl CovEstimate {
    pub fn raw(matrix: DMatrix<f64>) -> Self {
        CovEstimate {
            matrix,
            stage: CovStage::Raw,
            inf_gap: 0.0,
        }
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }
}

/// A fitted precision matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub theta: DMatrix<f64>,
    pub lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl From<DMatrix<f64>> for PrecisionEstimate {
    fn from(theta: DMatrix<f64>) -> Self {
        PrecisionEstimate::from_matrix(theta)
    }
}

impl PrecisionEstimate {
    /// Wraps an arbitrary matrix, e.g. one read back from disk.
    pub fn from_matrix(theta: DMatrix<f64>) -> Self {
        PrecisionEstimate {
            theta,
            lambda: 0.0,
            converged: true,
            iterations: 0,
            kkt_residual: 0.0,
        }
    }

    pub fn p(&self) -> usize {
        self.theta.nrows()
    }

    /// Upper-triangle pairs `(j, k)`, `j < k`, with `|theta_jk| > tol`.
    pub fn edges(&self, tol: f64) -> Vec<(usize, usize)> {
        upper_support(&self.theta, tol)
    }
}

pub(crate) fn upper_support(theta: &DMatrix<f64>, tol: f64) -> Vec<(usize, usize)> {
    let p = theta.nrows();
    let mut out = Vec::new();
    for j in 0..p {
        for k in (j + 1)..p {
            if theta[(j, k)].abs() > tol {
                out.push((j, k));
            }
        }
    }
    out
}

/// Ground-truth precision matrix and its off-diagonal support.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueNetwork {
    pub theta: DMatrix<f64>,
    /// Pairs `(i, j)` with `i < j` and `theta_ij != 0`, in row-major order.
    pub support: Vec<(usize, usize)>,
}

impl TrueNetwork {
    /// Validates positive definiteness and derives the support.
    pub fn new(theta: DMatrix<f64>) -> Result<Self> {
        linalg::check_symmetric(&theta, 1e-12)?;
        if theta.clone().cholesky().is_none() {
            return Err(PlnError::NotPositiveDefinite {
                min_eigenvalue: linalg::min_eigenvalue(&theta),
            });
        }
        let support = upper_support(&theta, 0.0);
        Ok(TrueNetwork { theta, support })
    }

    pub fn p(&self) -> usize {
        self.theta.nrows()
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a != b && self.theta[(a, b)] != 0.0
    }
}

/// Draws `n = lib_sizes.len()` cells from the Poisson log-normal model.
///
/// Each row draws `z ~ N(mu, sigma)` through an eigen factor of `sigma`, then
/// `y_j ~ Poisson(s_i * exp(z_j))`.
pub fn pln_sample(params: &LatentParams, lib_sizes: &[f64], seed: u64) -> Result<CountMatrix> {
    let p = params.p();
    let n = lib_sizes.len();
    if n == 0 {
        return Err(PlnError::InvalidArgument("need at least one library size".into()));
    }
    let eig = SymEigen::new(&params.sigma);
    if p == 0 || eig.min() <= 0.0 {
        return Err(PlnError::NotPositiveDefinite {
            min_eigenvalue: eig.min(),
        });
    }
    let mut factor = eig.vectors.clone();
    for (k, mut col) in factor.column_iter_mut().enumerate() {
        col *= eig.values[k].max(0.0).sqrt();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = Vec::with_capacity(n * p);
    let mut xi = DVector::<f64>::zeros(p);
    for (i, &s) in lib_sizes.iter().enumerate() {
        if !(s.is_finite() && s > 0.0) {
            return Err(PlnError::InvalidArgument(format!(
                "library size of row {i} must be positive, got {s}"
            )));
        }
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let z = &params.mu + &factor * &xi;
        for (j, &zj) in z.iter().enumerate() {
            let rate = s * zj.exp();
            if !(rate <= MAX_LATENT_RATE) {
                return Err(PlnError::LatentRateOverflow { row: i, col: j, rate });
            }
            let y = if rate > 0.0 {
                let dist = Poisson::new(rate)
                    .map_err(|e| PlnError::Internal(format!("poisson rate {rate}: {e}")))?;
                dist.sample(&mut rng) as u64
            } else {
                0
            };
            counts.push(y);
        }
    }
    CountMatrix::new(n, p, counts, lib_sizes.to_vec())
}

/// Closed-form moments of the library-size-normalized counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PlnMoments {
    /// `E(Y_j / s) = exp(mu_j + sigma_jj / 2)`.
    pub mean: DVector<f64>,
    /// `E((Y_j^2 - Y_j) / s^2) = mean_j^2 exp(sigma_jj)`.
    pub diag_factorial_moment: DVector<f64>,
    /// `E(Y_j Y_k / s^2) = mean_j mean_k exp(sigma_jk)` off the diagonal;
    /// the diagonal repeats the factorial moment.
    pub cross_moment: DMatrix<f64>,
    pub lib_size: f64,
}

impl PlnMoments {
    /// Mean of the raw counts at this library size.
    pub fn raw_mean(&self) -> DVector<f64> {
        &self.mean * self.lib_size
    }
}

pub fn pln_moments(params: &LatentParams, s: f64) -> PlnMoments {
    let p = params.p();
    let sigma = &params.sigma;
    let mean = DVector::from_fn(p, |j, _| (params.mu[j] + 0.5 * sigma[(j, j)]).exp());
    let diag = DVector::from_fn(p, |j, _| mean[j] * mean[j] * sigma[(j, j)].exp());
    let cross = DMatrix::from_fn(p, p, |j, k| {
        if j == k {
            diag[j]
        } else {
            mean[j] * mean[k] * sigma[(j, k)].exp()
        }
    });
    PlnMoments {
        mean,
        diag_factorial_moment: diag,
        cross_moment: cross,
        lib_size: s,
    }
}

/// Total-sum-scaling library sizes: the raw row sums.
pub fn estimate_lib_sizes(data: &CountMatrix) -> Result<Vec<f64>> {
    (0..data.n())
        .map(|i| {
            let total: u64 = data.row(i).iter().sum();
            if total == 0 {
                Err(PlnError::EmptyRow { row: i })
            } else {
                Ok(total as f64)
            }
        })
        .collect()
}
