use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::{Mat, Side};

use super::CsrMatrix;
use crate::error::{Error, Result};

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct Cholesky {
    llt: Llt<usize, f64>,
    n: usize,
}

impl Cholesky {
    /// Fails with `LinearSolve` if the matrix is not numerically positive definite.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::LinearSolve("Cholesky needs a square matrix".into()));
        }
        let llt = a
            .to_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::LinearSolve(format!("Cholesky: {e:?}")))?;
        Ok(Cholesky { llt, n: a.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(x.as_mut());
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Solves for several right-hand sides at once.
    pub fn solve_many(&self, bs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if bs.is_empty() {
            return Vec::new();
        }
        let mut x = Mat::<f64>::from_fn(self.n, bs.len(), |i, j| bs[j][i]);
        self.llt.solve_in_place(x.as_mut());
        (0..bs.len())
            .map(|j| (0..self.n).map(|i| x[(i, j)]).collect())
            .collect()
    }
}

/// Sparse LU factorization of a general square matrix.
pub struct SparseLu {
    lu: Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::LinearSolve("LU needs a square matrix".into()));
        }
        let lu = a
            .to_faer()
            .sp_lu()
            .map_err(|e| Error::LinearSolve(format!("LU: {e:?}")))?;
        Ok(SparseLu { lu, n: a.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(x.as_mut());
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_transpose_in_place(x.as_mut());
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Set faer's global parallelism: `None` means sequential.
pub fn set_threads(threads: Option<usize>) {
    match threads {
        Some(n) if n > 1 => faer::set_global_parallelism(faer::Par::rayon(n)),
        _ => faer::set_global_parallelism(faer::Par::Seq),
    }
}
