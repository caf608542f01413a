//! Closed genus-0 triangle meshes with intrinsic edge-length metrics.

mod fields;
mod icosphere;
mod metric;
mod operators;
mod spectrum;

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

pub use fields::{ScalarField, SymTensorField, VectorField};
pub use icosphere::build_icosphere;
pub use metric::{FaceGeometry, MetricField};
pub use operators::{
    angle_defects, divergence, edge_form_tensor, face_geometries, gaussian_curvature, gradient, integrate, laplacian,
    GalerkinOperator,
};
pub(crate) use operators::{
    gradient_values, laplacian_from, lumped_mass,
    tensor_stiffness, weak_pairing, weighted_stiffness,
};
pub use spectrum::{first_nonzero_eigenvalue, LaplaceSpectrum};

use crate::error::{Error, Result};

/// Oriented, closed, connected, genus-0 triangle mesh.
///
/// Edges are numbered in order of first appearance when walking faces in order and
/// each face's sides `(v0,v1), (v1,v2), (v2,v0)` in turn.
#[derive(Clone, Debug)]
pub struct TriMesh {
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    face_edges: Vec<[usize; 3]>,
    edge_faces: Vec<[usize; 2]>,
    vertex_faces: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    positions: Option<Vec<[f64; 3]>>,
    id: u64,
}

impl PartialEq for TriMesh {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.faces == other.faces
    }
}

impl TriMesh {
    /// Validates connectivity. `positions`, if given, are seed coordinates (for embedding
    /// initial guesses and output); they play no role in the intrinsic geometry.
    pub fn new(faces: Vec<[usize; 3]>, positions: Option<Vec<[f64; 3]>>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::InvalidMesh("no faces".into()));
        }
        let nv = faces.iter().flatten().max().map_or(0, |m| m + 1);
        if let Some(p) = &positions {
            if p.len() != nv {
                return Err(Error::InvalidMesh(format!(
                    "{} positions for {} vertices",
                    p.len(),
                    nv
                )));
            }
        }
        let mut edge_id: HashMap<(usize, usize), usize> = HashMap::new();
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut face_edges = Vec::with_capacity(faces.len());
        let mut edge_faces: Vec<Vec<usize>> = Vec::new();
        let mut vertex_faces = vec![Vec::new(); nv];
        for (f, tri) in faces.iter().enumerate() {
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[2] == tri[0] {
                return Err(Error::InvalidMesh(format!("face {f} repeats a vertex")));
            }
            let mut fe = [0; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if let Some(prev) = directed.insert((a, b), f) {
                    return Err(Error::InvalidMesh(format!(
                        "directed edge ({a},{b}) used by faces {prev} and {f}: inconsistent orientation or non-manifold"
                    )));
                }
                let key = (a.min(b), a.max(b));
                let e = *edge_id.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_faces.push(Vec::new());
                    edges.len() - 1
                });
                edge_faces[e].push(f);
                fe[k] = e;
                vertex_faces[tri[k]].push(f);
            }
            face_edges.push(fe);
        }
        let mut ef = Vec::with_capacity(edges.len());
        for (e, fs) in edge_faces.iter().enumerate() {
            if fs.len() != 2 {
                return Err(Error::InvalidMesh(format!(
                    "edge {e} ({},{}) borders {} faces",
                    edges[e][0],
                    edges[e][1],
                    fs.len()
                )));
            }
            ef.push([fs[0], fs[1]]);
        }
        if let Some(v) = vertex_faces.iter().position(|f| f.is_empty()) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not used by any face")));
        }
        let euler = nv as i64 - edges.len() as i64 + faces.len() as i64;
        if euler != 2 {
            return Err(Error::InvalidMesh(format!(
                "Euler characteristic {euler}, expected 2"
            )));
        }
        let mut neighbors = vec![Vec::new(); nv];
        for &[a, b] in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in neighbors.iter_mut() {
            n.sort_unstable();
        }
        // A single link cycle per vertex: its faces and neighbours come in equal number.
        for v in 0..nv {
            if vertex_faces[v].len() != neighbors[v].len() {
                return Err(Error::InvalidMesh(format!("vertex {v} is not a manifold vertex")));
            }
        }
        let mut seen = vec![false; nv];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        if count != nv {
            return Err(Error::InvalidMesh("mesh is not connected".into()));
        }
        let mut h = DefaultHasher::new();
        faces.hash(&mut h);
        Ok(TriMesh {
            faces,
            edges,
            face_edges,
            edge_faces: ef,
            vertex_faces,
            neighbors,
            positions,
            id: h.finish(),
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.neighbors.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Edge endpoints, smaller index first.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// `face_edges()[f][k]` joins `faces()[f][k]` and `faces()[f][(k+1)%3]`.
    pub fn face_edges(&self) -> &[[usize; 3]] {
        &self.face_edges
    }

    pub fn edge_faces(&self) -> &[[usize; 2]] {
        &self.edge_faces
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    /// Sorted one-ring neighbours.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn positions(&self) -> Option<&[[f64; 3]]> {
        self.positions.as_deref()
    }

    pub fn with_positions(mut self, positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.len() != self.num_vertices() {
            return Err(Error::InvalidMesh(format!(
                "{} positions for {} vertices",
                positions.len(),
                self.num_vertices()
            )));
        }
        self.positions = Some(positions);
        Ok(self)
    }

    /// Connectivity fingerprint used to detect fields from different meshes.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        let f = self.vertex_faces[a]
            .iter()
            .find(|&&f| self.faces[f].contains(&b))?;
        let tri = self.faces[*f];
        (0..3)
            .find(|&k| {
                let (p, q) = (tri[k], tri[(k + 1) % 3]);
                (p == a && q == b) || (p == b && q == a)
            })
            .map(|k| self.face_edges[*f][k])
    }

    /// Vertices at graph distance 1 or 2 from `v`, excluding `v`, ascending.
    pub fn two_ring(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.neighbors[v].clone();
        for &w in &self.neighbors[v] {
            out.extend_from_slice(&self.neighbors[w]);
        }
        out.sort_unstable();
        out.dedup();
        out.retain(|&w| w != v);
        out
    }

    pub(crate) fn check_len(&self, name: &str, got: usize, per: Per) -> Result<()> {
        let expected = match per {
            Per::Vertex => self.num_vertices(),
            Per::Edge => self.num_edges(),
            Per::Face => self.num_faces(),
        };
        if got != expected {
            return Err(Error::FieldLength {
                name: name.to_string(),
                expected,
                got,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Per {
    Vertex,
    Edge,
    Face,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> Vec<[usize; 3]> {
        vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]
    }

    #[test]
    fn tetrahedron_is_valid() {
        let m = TriMesh::new(tetra(), None).unwrap();
        assert_eq!((m.num_vertices(), m.num_edges(), m.num_faces()), (4, 6, 4));
        assert_eq!(m.edges()[0], [0, 2]);
        assert_eq!(m.edge_between(3, 1), Some(m.face_edges()[1][1]));
    }

    #[test]
    fn flipped_face_rejected() {
        let mut f = tetra();
        f[3] = [1, 3, 2];
        assert!(matches!(TriMesh::new(f, None), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn open_surface_rejected() {
        let mut f = tetra();
        f.pop();
        assert!(TriMesh::new(f, None).is_err());
    }

    #[test]
    fn two_components_rejected() {
        let mut f = tetra();
        f.extend(tetra().iter().map(|t| [t[0] + 4, t[1] + 4, t[2] + 4]));
        assert!(TriMesh::new(f, None).is_err());
    }
}
