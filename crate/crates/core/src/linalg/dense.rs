//! Dense reference routines for small problems and cross-checks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// All eigenpairs of the dense symmetric pencil `A x = λ B x`, ascending, `B`-orthonormal vectors.
pub fn generalized_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::LinearSolve("dense mass matrix not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::LinearSolve("singular Cholesky factor".into()))?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt_inv = linv.transpose();
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| &lt_inv * eig.eigenvectors.column(i))
        .collect();
    Ok((values, vectors))
}

/// Orthonormal basis (columns) of the complement of `span(vs)` in the `w`-weighted inner product,
/// expressed in the standard basis, as an `n x (n - k)` matrix `Q` with `Qᵀ W Q = I`.
pub fn weighted_complement(vs: &[Vec<f64>], w: &[f64]) -> DMatrix<f64> {
    let n = w.len();
    let sq: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let k = vs.len();
    let mut m = DMatrix::zeros(n, k);
    for (j, v) in vs.iter().enumerate() {
        for i in 0..n {
            m[(i, j)] = v[i] * sq[i];
        }
    }
    let mut full = DMatrix::zeros(n, n);
    full.view_mut((0, 0), (n, k)).copy_from(&m);
    for j in k..n {
        full[(j - k, j)] = 1.0;
    }
    let qr = full.qr();
    let q = qr.q();
    let mut out = q.columns(k, n - k).into_owned();
    for i in 0..n {
        for j in 0..n - k {
            out[(i, j)] /= sq[i];
        }
    }
    out
}
