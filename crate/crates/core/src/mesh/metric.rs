use serde::{Deserialize, Serialize};

use super::{Per, TriMesh};
use crate::error::{Error, Result};

/// Piecewise-flat metric given by one length per edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricField {
    #[serde(skip)]
    mesh_id: u64,
    lengths: Vec<f64>,
}

impl MetricField {
    /// Checks positivity and the strict triangle inequality on every face.
    pub fn new(mesh: &TriMesh, lengths: Vec<f64>) -> Result<Self> {
        mesh.check_len("edge lengths", lengths.len(), Per::Edge)?;
        if let Some(e) = lengths.iter().position(|l| !(l.is_finite() && *l > 0.0)) {
            let f = mesh.edge_faces()[e][0];
            return Err(Error::InvalidMetric {
                face: f,
                reason: format!("edge {e} has non-positive length {}", lengths[e]),
            });
        }
        for (f, fe) in mesh.face_edges().iter().enumerate() {
            let [a, b, c] = fe.map(|e| lengths[e]);
            if a >= b + c || b >= a + c || c >= a + b {
                return Err(Error::InvalidMetric {
                    face: f,
                    reason: format!("triangle inequality fails for lengths {a}, {b}, {c}"),
                });
            }
        }
        Ok(MetricField {
            mesh_id: mesh.id(),
            lengths,
        })
    }

    /// Chordal lengths of a realization.
    pub fn from_positions(mesh: &TriMesh, positions: &[[f64; 3]]) -> Result<Self> {
        mesh.check_len("positions", positions.len(), Per::Vertex)?;
        let lengths = mesh
            .edges()
            .iter()
            .map(|&[a, b]| dist(&positions[a], &positions[b]))
            .collect();
        MetricField::new(mesh, lengths)
    }

    /// From squared lengths (the metric evaluated on edge vectors).
    pub fn from_squared(mesh: &TriMesh, sq: &[f64]) -> Result<Self> {
        mesh.check_len("squared edge lengths", sq.len(), Per::Edge)?;
        if let Some(e) = sq.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::InvalidMetric {
                face: mesh.edge_faces()[e][0],
                reason: format!("edge {e} has non-positive squared length {}", sq[e]),
            });
        }
        MetricField::new(mesh, sq.iter().map(|s| s.sqrt()).collect())
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn squared(&self) -> Vec<f64> {
        self.lengths.iter().map(|l| l * l).collect()
    }

    /// Squared lengths `ℓ² + t q_e`.
    pub fn perturbed(&self, mesh: &TriMesh, q: &[f64], t: f64) -> Result<Self> {
        mesh.check_len("edge form", q.len(), super::Per::Edge)?;
        let sq: Vec<f64> = self.lengths.iter().zip(q).map(|(l, d)| l * l + t * d).collect();
        MetricField::from_squared(mesh, &sq)
    }

    pub fn scaled(&self, s: f64) -> Self {
        MetricField {
            mesh_id: self.mesh_id,
            lengths: self.lengths.iter().map(|l| l * s).collect(),
        }
    }

    pub fn check_mesh(&self, mesh: &TriMesh) -> Result<()> {
        if self.mesh_id != mesh.id() || self.lengths.len() != mesh.num_edges() {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    /// Lengths of the sides `(v0,v1), (v1,v2), (v2,v0)` of face `f`.
    pub fn face_lengths(&self, mesh: &TriMesh, f: usize) -> [f64; 3] {
        mesh.face_edges()[f].map(|e| self.lengths[e])
    }

    pub fn total_area(&self, mesh: &TriMesh) -> Result<f64> {
        Ok(super::face_geometries(mesh, self)?.iter().map(|g| g.area).sum())
    }
}

pub(crate) fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Intrinsic layout of one face: corner 0 at the origin, corner 1 on the positive x-axis,
/// corner 2 in the upper half plane. Vectors and tensors on the face use this frame.
#[derive(Clone, Copy, Debug)]
pub struct FaceGeometry {
    pub area: f64,
    pub corners: [[f64; 2]; 3],
    /// Gradients of the three hat functions.
    pub grads: [[f64; 2]; 3],
    /// Interior angle at each corner.
    pub angles: [f64; 3],
    /// Cotangent of the interior angle at each corner.
    pub cots: [f64; 3],
}

impl FaceGeometry {
    /// `l = [|v0v1|, |v1v2|, |v2v0|]`; `None` when the triangle is (nearly) degenerate.
    pub fn from_lengths(l: [f64; 3]) -> Option<Self> {
        let [c, a, b] = l; // c opposite v2, a opposite v0, b opposite v1
        let mut s = [a, b, c];
        s.sort_by(|x, y| y.total_cmp(x));
        let [x, y, z] = s;
        // Kahan's stable Heron formula.
        let prod = (x + (y + z)) * (z - (x - y)) * (z + (x - y)) * (x + (y - z));
        if !(prod > 0.0) {
            return None;
        }
        let area = 0.25 * prod.sqrt();
        if area <= 1e-8 * x * x {
            return None;
        }
        let cos0 = (b * b + c * c - a * a) / (2.0 * b * c);
        let cos1 = (a * a + c * c - b * b) / (2.0 * a * c);
        let cos2 = (a * a + b * b - c * c) / (2.0 * a * b);
        let sin0 = 2.0 * area / (b * c);
        let sin1 = 2.0 * area / (a * c);
        let sin2 = 2.0 * area / (a * b);
        let cots = [cos0 / sin0, cos1 / sin1, cos2 / sin2];
        let angles = [
            sin0.atan2(cos0),
            sin1.atan2(cos1),
            sin2.atan2(cos2),
        ];
        let corners = [[0.0, 0.0], [c, 0.0], [b * cos0, b * sin0]];
        let mut grads = [[0.0; 2]; 3];
        for k in 0..3 {
            let p = corners[(k + 1) % 3];
            let q = corners[(k + 2) % 3];
            let d = [q[0] - p[0], q[1] - p[1]];
            grads[k] = [-d[1] / (2.0 * area), d[0] / (2.0 * area)];
        }
        Some(FaceGeometry {
            area,
            corners,
            grads,
            angles,
            cots,
        })
    }

    /// Gradient of the affine interpolant of corner values.
    pub fn gradient(&self, vals: [f64; 3]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..3 {
            g[0] += vals[k] * self.grads[k][0];
            g[1] += vals[k] * self.grads[k][1];
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_triangle_layout() {
        let g = FaceGeometry::from_lengths([3.0, 5.0, 4.0]).unwrap();
        assert!((g.area - 6.0).abs() < 1e-14);
        assert!((g.corners[2][0]).abs() < 1e-14);
        assert!((g.corners[2][1] - 4.0).abs() < 1e-14);
        assert!(g.cots[0].abs() < 1e-14);
        let sum: f64 = g.angles.iter().sum();
        assert!((sum - std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn gradients_reproduce_affine() {
        let g = FaceGeometry::from_lengths([1.3, 1.1, 0.9]).unwrap();
        let f = |p: [f64; 2]| 2.0 * p[0] - 0.5 * p[1] + 3.0;
        let grad = g.gradient([f(g.corners[0]), f(g.corners[1]), f(g.corners[2])]);
        assert!((grad[0] - 2.0).abs() < 1e-13 && (grad[1] + 0.5).abs() < 1e-13);
    }

    #[test]
    fn flat_triangle_is_degenerate() {
        assert!(FaceGeometry::from_lengths([1.0, 1.0, 2.0]).is_none());
    }
}
