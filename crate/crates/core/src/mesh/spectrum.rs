use serde::Serialize;

use super::{laplacian, MetricField, TriMesh};
use crate::error::Result;
use crate::linalg::{eigen::leading_multiplicity, smallest_eigenpairs, EigenOptions, MassOp};

/// Bottom of the nonzero Laplace spectrum.
#[derive(Clone, Debug, Serialize)]
pub struct LaplaceSpectrum {
    pub lambda1: f64,
    /// Number of computed eigenvalues equal to `lambda1` within a relative `1e-6`.
    pub multiplicity: usize,
    /// Smallest nonzero eigenvalues, ascending.
    pub values: Vec<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    pub residual: f64,
}

/// Smallest positive eigenvalue of `-Δ` (pencil `(-L, M)` on mean-zero functions).
pub fn first_nonzero_eigenvalue(mesh: &TriMesh, metric: &MetricField) -> Result<LaplaceSpectrum> {
    first_eigenvalues(mesh, metric, 6)
}

pub(crate) fn first_eigenvalues(
    mesh: &TriMesh,
    metric: &MetricField,
    count: usize,
) -> Result<LaplaceSpectrum> {
    let lap = laplacian(mesh, metric)?;
    let a = lap.stiffness.scale(-1.0);
    let area = lap.total_area();
    let ones = vec![vec![1.0; mesh.num_vertices()]];
    let pairs = smallest_eigenpairs(
        &a,
        MassOp::Diagonal(&lap.mass),
        &ones,
        &EigenOptions {
            count,
            shift: -2.0 * std::f64::consts::PI / area,
            guard: 10,
            tol: 1e-10,
            ..Default::default()
        },
    )?;
    let multiplicity = leading_multiplicity(&pairs.values, 1e-6);
    Ok(LaplaceSpectrum {
        lambda1: pairs.values[0],
        multiplicity,
        values: pairs.values.clone(),
        vectors: pairs.vectors,
        residual: pairs.residuals.iter().cloned().fold(0.0, f64::max),
    })
}
