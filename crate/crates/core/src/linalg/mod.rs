//! Sparse matrices, factorizations and iterative eigen/linear solvers.

pub mod dense;
pub mod eigen;
mod factor;
pub mod krylov;
mod sparse;

pub use eigen::{smallest_eigenpairs, EigenOptions, EigenPairs, MassOp};
pub use factor::{set_threads, Cholesky, SparseLu};
pub use sparse::{axpy, dot, norm2, wdot, CsrMatrix};
