//! Sparse direct solves for the Newton Jacobian, backed by faer's sparse LU.
//!
//! The sparsity pattern depends only on the grid, so the symbolic structure and
//! the symbolic LU analysis are computed once per pattern and reused.

use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::{Mat, MatMut};
use faer::prelude::Solve;
use faer::reborrow::Reborrow;

use crate::error::{Error, Result};

/// Requested relative accuracy of a linear solve, `‖Jδ + F‖∞ ≤ tol ‖F‖∞`.
pub const LINEAR_REL_TOL: f64 = 1e-12;
/// Residuals above this fraction of `‖b‖∞` are never accepted, whatever the
/// round-off floor; this rejects solutions of (numerically) singular systems.
const LINEAR_REL_CAP: f64 = 1e-8;
const MAX_REFINEMENT: usize = 3;

/// Triplet layout shared by every matrix assembled on one pattern.
pub(crate) struct SparsePattern {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    lu: SymbolicLu<usize>,
}

impl SparsePattern {
    /// `entries` lists `(row, col)` in the order values will later be supplied.
    /// Repeated pairs are summed.
    pub fn new(n: usize, entries: &[(usize, usize)]) -> Result<Self> {
        let pairs: Vec<Pair<usize, usize>> =
            entries.iter().map(|&(r, c)| Pair::new(r, c)).collect();
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &pairs)
            .map_err(|e| Error::LinearSolve(format!("pattern: {e:?}")))?;
        let lu = SymbolicLu::try_new(symbolic.rb())
            .map_err(|e| Error::LinearSolve(format!("symbolic LU: {e:?}")))?;
        Ok(Self {
            n,
            rows: entries.iter().map(|e| e.0).collect(),
            cols: entries.iter().map(|e| e.1).collect(),
            symbolic,
            argsort,
            lu,
        })
    }

    pub fn nnz_entries(&self) -> usize {
        self.rows.len()
    }

    /// Sparse product `y = M x` from values listed in pattern order.
    pub fn matvec(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(values) {
            y[r] += v * x[c];
        }
        y
    }

    /// Solves `M x = b` by sparse LU with iterative refinement.
    ///
    /// Accepts the result once the residual is below `LINEAR_REL_TOL ‖b‖∞` or
    /// at the round-off level of evaluating `M x`, whichever is larger. The
    /// round-off allowance is capped at `1e-8 ‖b‖∞`.
    pub fn solve(&self, values: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        let mat = SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, values)
            .map_err(|e| Error::LinearSolve(format!("assembly: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(self.lu.clone(), mat.rb())
            .map_err(|e| Error::LinearSolve(format!("factorization: {e:?}")))?;

        let b_norm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if b_norm == 0.0 {
            return Ok(vec![0.0; self.n]);
        }
        let mat_norm = self.row_sum_norm(values);

        let mut x = vec![0.0; self.n];
        let mut r = b.to_vec();
        for _ in 0..=MAX_REFINEMENT {
            let mut rhs = Mat::from_fn(self.n, 1, |i, _| r[i]);
            lu.solve_in_place(rhs.as_mut());
            add_column(&mut x, rhs.as_mut());
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::LinearSolve("singular or ill-conditioned matrix".into()));
            }
            let mx = self.matvec(values, &x);
            r = b.iter().zip(&mx).map(|(bi, mi)| bi - mi).collect();
            let r_norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let x_norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let floor = 16.0 * f64::EPSILON * mat_norm * x_norm;
            if r_norm <= (LINEAR_REL_TOL * b_norm).max(floor.min(LINEAR_REL_CAP * b_norm)) {
                return Ok(x);
            }
        }
        Err(Error::LinearSolve(
            "residual above tolerance after iterative refinement".into(),
        ))
    }

    fn row_sum_norm(&self, values: &[f64]) -> f64 {
        let mut sums = vec![0.0; self.n];
        for (&r, &v) in self.rows.iter().zip(values) {
            sums[r] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }
}

fn add_column(x: &mut [f64], col: MatMut<'_, f64>) {
    for (i, xi) in x.iter_mut().enumerate() {
        *xi += col[(i, 0)];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_tridiagonal_with_duplicates() {
        let n = 10;
        let mut entries = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            entries.push((i, i));
            values.push(1.5);
            entries.push((i, i));
            values.push(1.5);
            entries.push((i, (i + 1) % n));
            values.push(-1.0);
            entries.push((i, (i + n - 1) % n));
            values.push(-0.5);
        }
        let pat = SparsePattern::new(n, &entries).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = pat.matvec(&values, &x_true);
        let x = pat.solve(&values, &b).unwrap();
        for (a, e) in x.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_matrix_reported() {
        let n = 8;
        let mut entries = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            entries.push((i, i));
            values.push(2.0);
            entries.push((i, (i + 1) % n));
            values.push(-1.0);
            entries.push((i, (i + n - 1) % n));
            values.push(-1.0);
        }
        let pat = SparsePattern::new(n, &entries).unwrap();
        let b: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        assert!(pat.solve(&values, &b).is_err());
    }
}
