//! Method-of-moments estimate of the latent covariance.
//!
//! With `a_j = mean(Y_j / S)`, the raw estimate is
//! `log mean(Y_j (Y_j - 1) / S^2) - 2 log a_j` on the diagonal and
//! `log mean(Y_j Y_k / S^2) - log a_j - log a_k` off it.

use std::borrow::Borrow;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{PlnError, Result};
use crate::linalg::CompensatedSum;
use crate::model::{CountMatrix, CovEstimate};

/// Floor applied to log arguments that are not positive.
pub const LOG_FLOOR: f64 = 1e-12;

/// Record of the entries whose empirical moment had to be clamped before the log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentDiagnostics {
    pub n_clamped_entries: usize,
    /// `(j, k)` with `j <= k`.
    pub clamped_pairs: Vec<(usize, usize)>,
    pub floor_value: f64,
}

/// Single-pass accumulator of the three moment sums.
///
/// Partial accumulators over disjoint row sets can be merged in any order.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    p: usize,
    n: usize,
    first: Vec<CompensatedSum>,
    second: Vec<CompensatedSum>,
    // packed upper triangle, row-major, j < k
    cross: Vec<CompensatedSum>,
}

impl MomentAccumulator {
    pub fn new(p: usize) -> Self {
        MomentAccumulator {
            p,
            n: 0,
            first: vec![CompensatedSum::default(); p],
            second: vec![CompensatedSum::default(); p],
            cross: vec![CompensatedSum::default(); p * p.saturating_sub(1) / 2],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn packed(&self, j: usize, k: usize) -> usize {
        // offset of row j in the strict upper triangle
        j * (2 * self.p - j - 1) / 2 + (k - j - 1)
    }

    pub fn push(&mut self, data: &CountMatrix) -> Result<()> {
        if data.p() != self.p {
            return Err(PlnError::DimensionMismatch(format!(
                "chunk has {} columns, expected {}",
                data.p(),
                self.p
            )));
        }
        let mut nz: Vec<(usize, f64)> = Vec::with_capacity(self.p);
        for i in 0..data.n() {
            let s = data.lib_sizes()[i];
            let inv_s2 = 1.0 / (s * s);
            nz.clear();
            nz.extend(
                data.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, &y)| y > 0)
                    .map(|(j, &y)| (j, y as f64)),
            );
            for (a, &(j, yj)) in nz.iter().enumerate() {
                self.first[j].add(yj / s);
                if yj > 1.0 {
                    self.second[j].add(yj * (yj - 1.0) * inv_s2);
                }
                for &(k, yk) in &nz[a + 1..] {
                    let idx = self.packed(j, k);
                    self.cross[idx].add(yj * yk * inv_s2);
                }
            }
        }
        self.n += data.n();
        Ok(())
    }

    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.p != self.p {
            return Err(PlnError::DimensionMismatch(format!(
                "accumulator has {} columns, expected {}",
                other.p, self.p
            )));
        }
        for (a, b) in self
            .first
            .iter_mut()
            .chain(self.second.iter_mut())
            .chain(self.cross.iter_mut())
            .zip(other.first.iter().chain(&other.second).chain(&other.cross))
        {
            a.merge(b);
        }
        self.n += other.n;
        Ok(())
    }

    /// Turns the sums into the raw covariance estimate.
    pub fn finish(&self) -> Result<(CovEstimate, MomentDiagnostics)> {
        if self.n == 0 {
            return Err(PlnError::NoData);
        }
        if self.n < 2 {
            return Err(PlnError::InvalidArgument(
                "the moment estimator needs at least two rows".into(),
            ));
        }
        let n = self.n as f64;
        let alpha: Vec<f64> = self.first.iter().map(|s| s.value() / n).collect();
        let zero: Vec<usize> = (0..self.p).filter(|&j| alpha[j] <= 0.0).collect();
        if !zero.is_empty() {
            return Err(PlnError::ZeroGenes { genes: zero });
        }
        let log_alpha: Vec<f64> = alpha.iter().map(|a| a.ln()).collect();

        let mut clamped = Vec::new();
        let mut safe_log = |arg: f64, j: usize, k: usize| {
            if arg <= LOG_FLOOR {
                clamped.push((j, k));
                LOG_FLOOR.ln()
            } else {
                arg.ln()
            }
        };

        let mut sigma = DMatrix::zeros(self.p, self.p);
        for j in 0..self.p {
            sigma[(j, j)] = safe_log(self.second[j].value() / n, j, j) - 2.0 * log_alpha[j];
            for k in (j + 1)..self.p {
                let v = safe_log(self.cross[self.packed(j, k)].value() / n, j, k)
                    - log_alpha[j]
                    - log_alpha[k];
                sigma[(j, k)] = v;
                sigma[(k, j)] = v;
            }
        }
        clamped.sort_unstable();
        let diag = MomentDiagnostics {
            n_clamped_entries: clamped.len(),
            clamped_pairs: clamped,
            floor_value: LOG_FLOOR,
        };
        Ok((CovEstimate::raw(sigma), diag))
    }
}

/// Raw moment estimate from a full count matrix.
pub fn moment_cov(data: &CountMatrix) -> Result<(CovEstimate, MomentDiagnostics)> {
    let mut acc = MomentAccumulator::new(data.p());
    acc.push(data)?;
    acc.finish()
}

/// Same estimate accumulated over row blocks in a single pass.
pub fn moment_cov_stream<I, B>(chunks: I) -> Result<(CovEstimate, MomentDiagnostics)>
where
    I: IntoIterator<Item = B>,
    B: Borrow<CountMatrix>,
{
    let mut acc: Option<MomentAccumulator> = None;
    for chunk in chunks {
        let chunk = chunk.borrow();
        acc.get_or_insert_with(|| MomentAccumulator::new(chunk.p()))
            .push(chunk)?;
    }
    acc.ok_or(PlnError::NoData)?.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(s: f64) -> CountMatrix {
        CountMatrix::from_rows(&[vec![1, 2], vec![3, 4]], vec![s, s]).unwrap()
    }

    #[test]
    fn hand_evaluated_two_by_two() {
        let (est, diag) = moment_cov(&small(1.0)).unwrap();
        let m = &est.matrix;
        assert!((m[(0, 0)] - (3f64.ln() - 4f64.ln())).abs() < 1e-14);
        assert!((m[(1, 1)] - (7f64.ln() - 9f64.ln())).abs() < 1e-14);
        assert!((m[(0, 1)] - (7f64.ln() - 6f64.ln())).abs() < 1e-14);
        assert!((m[(0, 0)] + 0.28768).abs() < 1e-5);
        assert!((m[(1, 1)] + 0.25131).abs() < 1e-5);
        assert!((m[(0, 1)] - 0.15415).abs() < 1e-5);
        assert_eq!(m[(0, 1)], m[(1, 0)]);
        assert_eq!(diag.n_clamped_entries, 0);
    }

    #[test]
    fn common_scale_cancels() {
        let (a, _) = moment_cov(&small(1.0)).unwrap();
        for c in [0.3, 2.0, 1e3] {
            let (b, _) = moment_cov(&small(c)).unwrap();
            assert!(crate::linalg::max_abs_diff(&a.matrix, &b.matrix) < 1e-12);
        }
    }

    #[test]
    fn zero_genes_are_listed() {
        let y = CountMatrix::from_rows(&[vec![0, 1, 0], vec![0, 2, 0]], vec![1.0; 2]).unwrap();
        assert_eq!(moment_cov(&y).unwrap_err(), PlnError::ZeroGenes { genes: vec![0, 2] });
    }

    #[test]
    fn clamps_are_recorded() {
        // gene 0 never exceeds one, genes 0 and 1 never co-occur
        let y = CountMatrix::from_rows(&[vec![1, 0], vec![0, 3]], vec![1.0; 2]).unwrap();
        let (est, diag) = moment_cov(&y).unwrap();
        assert_eq!(diag.clamped_pairs, vec![(0, 0), (0, 1)]);
        assert_eq!(diag.n_clamped_entries, 2);
        assert!(est.matrix[(0, 1)] < -20.0);
    }

    #[test]
    fn streaming_matches_batch() {
        let rows: Vec<Vec<u64>> = (0..7u64).map(|i| vec![i % 3 + 1, (i * 5) % 4, i + 1]).collect();
        let s: Vec<f64> = (0..7).map(|i| 1.0 + i as f64).collect();
        let y = CountMatrix::from_rows(&rows, s).unwrap();
        let (batch, _) = moment_cov(&y).unwrap();
        let (one, _) = moment_cov_stream([y.clone()]).unwrap();
        assert_eq!(one.matrix, batch.matrix);
        let (two, _) = moment_cov_stream(y.row_chunks(3)).unwrap();
        assert!(crate::linalg::max_abs_diff(&two.matrix, &batch.matrix) < 1e-14);
        assert_eq!(
            moment_cov_stream(Vec::<CountMatrix>::new()).unwrap_err(),
            PlnError::NoData
        );
        let other = CountMatrix::from_rows(&[vec![1, 2]], vec![1.0]).unwrap();
        assert!(matches!(
            moment_cov_stream([y, other]).unwrap_err(),
            PlnError::DimensionMismatch(_)
        ));
    }
}
