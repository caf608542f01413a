use std::f64::consts::PI;

use super::{FaceGeometry, MetricField, ScalarField, SymTensorField, TriMesh, VectorField};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Symmetric stiffness matrix with a lumped (diagonal) mass.
///
/// For the Laplacian the stiffness is the negative semidefinite cotangent matrix `L`,
/// and `Δf = M⁻¹ L f`.
#[derive(Clone, Debug)]
pub struct GalerkinOperator {
    pub stiffness: CsrMatrix,
    pub mass: Vec<f64>,
    mesh_id: u64,
}

impl GalerkinOperator {
    pub(crate) fn from_parts(mesh: &TriMesh, stiffness: CsrMatrix, mass: Vec<f64>) -> Self {
        GalerkinOperator {
            stiffness,
            mass,
            mesh_id: mesh.id(),
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    /// `M⁻¹ K f` on raw values.
    pub fn apply_values(&self, f: &[f64]) -> Vec<f64> {
        self.stiffness
            .mul_vec(f)
            .iter()
            .zip(&self.mass)
            .map(|(k, m)| k / m)
            .collect()
    }

    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        if f.mesh_id() != self.mesh_id {
            return Err(Error::MeshMismatch);
        }
        let mut out = f.clone();
        out.values = self.apply_values(&f.values);
        Ok(out)
    }

    /// `∫ f g` with the lumped mass.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        crate::linalg::wdot(&self.mass, f, g)
    }

    pub fn total_area(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// Per-face intrinsic layouts; fails on the first degenerate face.
pub fn face_geometries(mesh: &TriMesh, metric: &MetricField) -> Result<Vec<FaceGeometry>> {
    metric.check_mesh(mesh)?;
    (0..mesh.num_faces())
        .map(|f| {
            FaceGeometry::from_lengths(metric.face_lengths(mesh, f))
                .ok_or(Error::DegenerateTriangle { face: f })
        })
        .collect()
}

pub(crate) fn lumped_mass(mesh: &TriMesh, geo: &[FaceGeometry]) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_vertices()];
    for (tri, g) in mesh.faces().iter().zip(geo) {
        for &v in tri {
            m[v] += g.area / 3.0;
        }
    }
    m
}

/// Stiffness `Σ_f A_f w_f ∇φ_i·∇φ_j` with per-face weights; `None` weights mean the
/// plain cotangent matrix (sign as for `L`, i.e. negative semidefinite).
pub(crate) fn weighted_stiffness(
    mesh: &TriMesh,
    geo: &[FaceGeometry],
    weights: Option<&[f64]>,
) -> CsrMatrix {
    let mut t = Vec::with_capacity(mesh.num_faces() * 9);
    for (f, (tri, g)) in mesh.faces().iter().zip(geo).enumerate() {
        let w = weights.map_or(1.0, |w| w[f]);
        for a in 0..3 {
            for b in 0..3 {
                let k = g.area * (g.grads[a][0] * g.grads[b][0] + g.grads[a][1] * g.grads[b][1]);
                t.push((tri[a], tri[b], -w * k));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_vertices(), mesh.num_vertices(), &t)
}

/// Stiffness `Σ_f A_f ∇φ_iᵀ T_f ∇φ_j` for per-face symmetric tensors `[xx, xy, yy]`.
pub(crate) fn tensor_stiffness(mesh: &TriMesh, geo: &[FaceGeometry], tensors: &[[f64; 3]]) -> CsrMatrix {
    let mut t = Vec::with_capacity(mesh.num_faces() * 9);
    for ((tri, g), tt) in mesh.faces().iter().zip(geo).zip(tensors) {
        for a in 0..3 {
            let ga = g.grads[a];
            let ta = [tt[0] * ga[0] + tt[1] * ga[1], tt[1] * ga[0] + tt[2] * ga[1]];
            for b in 0..3 {
                let gb = g.grads[b];
                t.push((tri[a], tri[b], g.area * (ta[0] * gb[0] + ta[1] * gb[1])));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_vertices(), mesh.num_vertices(), &t)
}

/// Cotangent Laplacian with lumped mass.
pub fn laplacian(mesh: &TriMesh, metric: &MetricField) -> Result<GalerkinOperator> {
    let geo = face_geometries(mesh, metric)?;
    Ok(laplacian_from(mesh, &geo))
}

pub(crate) fn laplacian_from(mesh: &TriMesh, geo: &[FaceGeometry]) -> GalerkinOperator {
    GalerkinOperator {
        stiffness: weighted_stiffness(mesh, geo, None),
        mass: lumped_mass(mesh, geo),
        mesh_id: mesh.id(),
    }
}

/// Per-face gradient in the intrinsic face frames.
pub fn gradient(mesh: &TriMesh, metric: &MetricField, f: &ScalarField) -> Result<VectorField> {
    f.check_mesh(mesh)?;
    let geo = face_geometries(mesh, metric)?;
    let values = gradient_values(mesh, &geo, &f.values);
    VectorField::new(mesh, values)
}

pub(crate) fn gradient_values(mesh: &TriMesh, geo: &[FaceGeometry], f: &[f64]) -> Vec<[f64; 2]> {
    mesh.faces()
        .iter()
        .zip(geo)
        .map(|(tri, g)| g.gradient(tri.map(|v| f[v])))
        .collect()
}

/// Weak divergence: the negative mass-adjoint of [`gradient`], so that
/// `∫ φ div v = -∫ ⟨∇φ, v⟩` holds exactly for piecewise-linear `φ`.
pub fn divergence(mesh: &TriMesh, metric: &MetricField, v: &VectorField) -> Result<ScalarField> {
    v.check_mesh(mesh)?;
    let geo = face_geometries(mesh, metric)?;
    let mass = lumped_mass(mesh, &geo);
    let values = divergence_values(mesh, &geo, &mass, &v.values);
    ScalarField::new(mesh, values)
}

pub(crate) fn divergence_values(
    mesh: &TriMesh,
    geo: &[FaceGeometry],
    mass: &[f64],
    v: &[[f64; 2]],
) -> Vec<f64> {
    let mut out = weak_pairing(mesh, geo, v);
    for (o, m) in out.iter_mut().zip(mass) {
        *o = -*o / m;
    }
    out
}

/// `Σ_f A_f ⟨v_f, ∇φ_i⟩` for every vertex `i`.
pub(crate) fn weak_pairing(mesh: &TriMesh, geo: &[FaceGeometry], v: &[[f64; 2]]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_vertices()];
    for ((tri, g), vf) in mesh.faces().iter().zip(geo).zip(v) {
        for k in 0..3 {
            out[tri[k]] += g.area * (vf[0] * g.grads[k][0] + vf[1] * g.grads[k][1]);
        }
    }
    out
}

/// Per-face symmetric tensor `η` in the intrinsic face frames with `η(d, d) = q_e` on
/// every edge vector `d` of the face. Edge values of a smooth symmetric 2-tensor
/// (for example the change of squared lengths) give a consistent field.
pub fn edge_form_tensor(mesh: &TriMesh, metric: &MetricField, q: &[f64]) -> Result<SymTensorField> {
    mesh.check_len("edge form", q.len(), super::Per::Edge)?;
    let geo = face_geometries(mesh, metric)?;
    let mut out = Vec::with_capacity(mesh.num_faces());
    for (f, g) in geo.iter().enumerate() {
        let mut a = nalgebra::Matrix3::zeros();
        let mut b = nalgebra::Vector3::zeros();
        for k in 0..3 {
            let p = g.corners[k];
            let r = g.corners[(k + 1) % 3];
            let (u, v) = (r[0] - p[0], r[1] - p[1]);
            a[(k, 0)] = u * u;
            a[(k, 1)] = 2.0 * u * v;
            a[(k, 2)] = v * v;
            b[k] = q[mesh.face_edges()[f][k]];
        }
        let x = a
            .lu()
            .solve(&b)
            .ok_or(Error::DegenerateTriangle { face: f })?;
        out.push([x[0], x[1], x[2]]);
    }
    SymTensorField::new(mesh, out)
}

/// `∫ f` with the lumped mass.
pub fn integrate(mesh: &TriMesh, metric: &MetricField, f: &ScalarField) -> Result<f64> {
    f.check_mesh(mesh)?;
    let geo = face_geometries(mesh, metric)?;
    let mass = lumped_mass(mesh, &geo);
    Ok(crate::linalg::wdot(&mass, &f.values, &vec![1.0; mass.len()]))
}

/// `2π` minus the angle sum at each vertex.
pub fn angle_defects(mesh: &TriMesh, metric: &MetricField) -> Result<Vec<f64>> {
    let geo = face_geometries(mesh, metric)?;
    Ok(angle_defects_from(mesh, &geo))
}

pub(crate) fn angle_defects_from(mesh: &TriMesh, geo: &[FaceGeometry]) -> Vec<f64> {
    let mut d = vec![2.0 * PI; mesh.num_vertices()];
    for (tri, g) in mesh.faces().iter().zip(geo) {
        for k in 0..3 {
            d[tri[k]] -= g.angles[k];
        }
    }
    d
}

/// Angle defect divided by lumped vertex area.
pub fn gaussian_curvature(mesh: &TriMesh, metric: &MetricField) -> Result<ScalarField> {
    let geo = face_geometries(mesh, metric)?;
    let mass = lumped_mass(mesh, &geo);
    let d = angle_defects_from(mesh, &geo);
    ScalarField::new(mesh, d.iter().zip(&mass).map(|(d, m)| d / m).collect())
}
