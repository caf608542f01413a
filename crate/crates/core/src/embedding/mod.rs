//! Isometric embedding of positively curved metrics into flat space, the linearized
//! problem, and extrinsic shape data of the embedded surface.

mod shape;
mod solve;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::Serialize;

pub use shape::{
    d_second_fundamental, second_fundamental_in_frame, shape_data, tensor_weak_divergence, ShapeData,
};
pub use solve::{
    check_metric_curvature, continuation_embed, embed, linearized_embed, ContinuationEmbedding, EmbedConfig, Linearization,
};

use crate::mesh::TriMesh;

/// Vertex positions realizing a metric, in the canonical gauge: mass-weighted centroid at
/// the origin and principal axes of the vertex second-moment tensor along `x, y, z` in
/// descending order, each axis signed so the third moment along it is non-negative
/// (the last axis is then fixed by right-handedness).
#[derive(Clone, Debug, Serialize)]
pub struct Embedding {
    #[serde(skip)]
    mesh_id: u64,
    pub positions: Vec<[f64; 3]>,
    /// RMS of `(|x_a - x_b| - ℓ)/ℓ` over edges.
    pub edge_residual: f64,
    /// Newton iterations taken (summed over continuation steps, if any).
    pub iterations: usize,
    /// Edge residual after each accepted iterate.
    pub residual_history: Vec<f64>,
    /// Whether the solver had to fall back to a metric homotopy from the seed.
    pub used_homotopy: bool,
    /// Vertices found on the inner side of their link and reflected back out.
    pub repaired_vertices: usize,
}

impl Embedding {
    pub(crate) fn new(mesh: &TriMesh, positions: Vec<[f64; 3]>) -> Self {
        Embedding {
            mesh_id: mesh.id(),
            positions,
            edge_residual: 0.0,
            iterations: 0,
            residual_history: Vec::new(),
            used_homotopy: false,
            repaired_vertices: 0,
        }
    }

    /// Wraps externally provided positions (for example seed coordinates) without solving.
    pub fn from_positions(mesh: &TriMesh, positions: Vec<[f64; 3]>) -> crate::Result<Self> {
        mesh.check_len("positions", positions.len(), crate::mesh::Per::Vertex)?;
        Ok(Embedding::new(mesh, positions))
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn check_mesh(&self, mesh: &TriMesh) -> crate::Result<()> {
        if self.mesh_id != mesh.id() || self.positions.len() != mesh.num_vertices() {
            return Err(crate::Error::MeshMismatch);
        }
        Ok(())
    }

    /// Signed enclosed volume; positive for outward-oriented faces.
    pub fn volume(&self, mesh: &TriMesh) -> f64 {
        let p = &self.positions;
        mesh.faces()
            .iter()
            .map(|&[a, b, c]| {
                let (x, y, z) = (p[a], p[b], p[c]);
                (x[0] * (y[1] * z[2] - y[2] * z[1]) - x[1] * (y[0] * z[2] - y[2] * z[0])
                    + x[2] * (y[0] * z[1] - y[1] * z[0]))
                    / 6.0
            })
            .sum()
    }
}

/// Moves positions into the canonical gauge using vertex weights `w`.
///
/// Degenerate cases are resolved by vertex labels, so the result is still invariant
/// under rigid motions of the input: an axis whose third moment vanishes takes the sign
/// making the lowest-index vertex off its plane positive, and a repeated principal value
/// takes its axes from the lowest-index vertices with a nonzero projection.
pub(crate) fn canonical_gauge(positions: &mut [[f64; 3]], w: &[f64]) {
    let total: f64 = w.iter().sum();
    let mut c = [0.0; 3];
    for (p, wi) in positions.iter().zip(w) {
        for k in 0..3 {
            c[k] += wi * p[k] / total;
        }
    }
    let mut cov = Matrix3::zeros();
    for (p, wi) in positions.iter_mut().zip(w) {
        for k in 0..3 {
            p[k] -= c[k];
        }
        let v = Vector3::new(p[0], p[1], p[2]);
        cov += *wi * v * v.transpose();
    }
    let vs: Vec<Vector3<f64>> = positions.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect();
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let l = order.map(|i| eig.eigenvalues[i]);
    let a: Vec<Vector3<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let tol = 1e-8 * (l[0].abs() / total).sqrt();
    let tied = |i: usize, j: usize| (l[i] - l[j]).abs() <= 1e-9 * l[0].abs();

    let fix_sign = |e: Vector3<f64>| -> Vector3<f64> {
        let (third, mag) = vs.iter().zip(w).fold((0.0, 0.0), |(t, m), (v, wi)| {
            let d = e.dot(v);
            (t + wi * d.powi(3), m + wi * d.abs().powi(3))
        });
        let positive = if third.abs() > 1e-8 * mag {
            third > 0.0
        } else {
            vs.iter().map(|v| e.dot(v)).find(|d| d.abs() > tol).map_or(true, |d| d > 0.0)
        };
        if positive {
            e
        } else {
            -e
        }
    };
    // First vertex with a nonzero component orthogonal to `fixed`, normalized.
    let anchor = |fixed: &[Vector3<f64>], fallback: Vector3<f64>| -> Vector3<f64> {
        vs.iter()
            .map(|v| fixed.iter().fold(*v, |r, f| r - f * f.dot(&r)))
            .find(|r| r.norm() > tol)
            .map_or(fallback, |r| r.normalize())
    };

    let (e0, e1) = if tied(0, 1) && tied(1, 2) {
        let e0 = anchor(&[], a[0]);
        (e0, anchor(&[e0], a[1]))
    } else if tied(0, 1) {
        let e0 = anchor(&[a[2]], a[0]);
        (e0, fix_sign(a[2].cross(&e0)))
    } else if tied(1, 2) {
        let e0 = fix_sign(a[0]);
        (e0, anchor(&[e0], a[1]))
    } else {
        (fix_sign(a[0]), fix_sign(a[1]))
    };
    let e2 = e0.cross(&e1);
    for (p, v) in positions.iter_mut().zip(&vs) {
        *p = [e0.dot(v), e1.dot(v), e2.dot(v)];
    }
}

/// Optimal rotation and translation taking `a` onto `b` (Kabsch), applied to `a`;
/// returns the RMS distance after alignment.
pub fn align_rigid(a: &[[f64; 3]], b: &[[f64; 3]]) -> (Vec<[f64; 3]>, f64) {
    let n = a.len() as f64;
    let ca = a.iter().fold([0.0; 3], |s, p| [s[0] + p[0] / n, s[1] + p[1] / n, s[2] + p[2] / n]);
    let cb = b.iter().fold([0.0; 3], |s, p| [s[0] + p[0] / n, s[1] + p[1] / n, s[2] + p[2] / n]);
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        let u = Vector3::new(p[0] - ca[0], p[1] - ca[1], p[2] - ca[2]);
        let v = Vector3::new(q[0] - cb[0], q[1] - cb[1], q[2] - cb[2]);
        h += u * v.transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (vt.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = vt.transpose() * d * u.transpose();
    let mut out = Vec::with_capacity(a.len());
    let mut ss = 0.0;
    for (p, q) in a.iter().zip(b) {
        let v = r * Vector3::new(p[0] - ca[0], p[1] - ca[1], p[2] - ca[2]);
        let x = [v[0] + cb[0], v[1] + cb[1], v[2] + cb[2]];
        ss += (x[0] - q[0]).powi(2) + (x[1] - q[1]).powi(2) + (x[2] - q[2]).powi(2);
        out.push(x);
    }
    (out, (ss / n).sqrt())
}
