//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{PlnError, Result};

/// Largest absolute element-wise difference between `a` and its transpose.
pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_square(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(PlnError::DimensionMismatch(format!(
            "{what} is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub fn check_symmetric(a: &DMatrix<f64>, tol: f64) -> Result<()> {
    check_square(a, "matrix")?;
    let max_asymmetry = max_asymmetry(a);
    if max_asymmetry > tol {
        return Err(PlnError::NotSymmetric { max_asymmetry });
    }
    Ok(())
}

/// Replaces `a` by `(a + a^T) / 2` in place.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Element-wise max norm.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(a.clone());
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        SymEigen { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.get(0).copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.get(self.values.len().wrapping_sub(1)).copied().unwrap_or(0.0)
    }

    /// `U diag(f(d)) U^T`, symmetrized.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        let mut out = &scaled * self.vectors.transpose();
        symmetrize(&mut out);
        out
    }
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// True when `a - floor*I` admits a Cholesky factorization.
pub fn is_above(a: &DMatrix<f64>, floor: f64) -> bool {
    let mut shifted = a.clone();
    for i in 0..a.nrows() {
        shifted[(i, i)] -= floor;
    }
    shifted.cholesky().is_some()
}

/// Projection onto `{A : A ⪰ floor·I}` in Frobenius norm by eigenvalue clipping.
///
/// Matrices that already pass a Cholesky test are returned unchanged.
pub fn project_psd_floor(a: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    if is_above(a, floor) {
        return a.clone();
    }
    SymEigen::new(a).reconstruct_with(|d| d.max(floor))
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a.clone().cholesky().ok_or_else(|| PlnError::NotPositiveDefinite {
        min_eigenvalue: min_eigenvalue(a),
    })?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
