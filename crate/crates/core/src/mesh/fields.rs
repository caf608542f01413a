use serde::{Deserialize, Serialize};

use super::{Per, TriMesh};
use crate::error::{Error, Result};

/// Per-vertex real values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    #[serde(skip)]
    mesh_id: u64,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: &TriMesh, values: Vec<f64>) -> Result<Self> {
        mesh.check_len("scalar field", values.len(), Per::Vertex)?;
        Ok(ScalarField {
            mesh_id: mesh.id(),
            values,
        })
    }

    pub fn named(mesh: &TriMesh, name: &str, values: Vec<f64>) -> Result<Self> {
        mesh.check_len(name, values.len(), Per::Vertex)?;
        Ok(ScalarField {
            mesh_id: mesh.id(),
            values,
        })
    }

    pub fn zeros(mesh: &TriMesh) -> Self {
        ScalarField {
            mesh_id: mesh.id(),
            values: vec![0.0; mesh.num_vertices()],
        }
    }

    pub fn constant(mesh: &TriMesh, c: f64) -> Self {
        ScalarField {
            mesh_id: mesh.id(),
            values: vec![c; mesh.num_vertices()],
        }
    }

    pub fn from_fn(mesh: &TriMesh, f: impl FnMut(usize) -> f64) -> Self {
        ScalarField {
            mesh_id: mesh.id(),
            values: (0..mesh.num_vertices()).map(f).collect(),
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_mesh(&self, mesh: &TriMesh) -> Result<()> {
        if self.mesh_id != mesh.id() || self.values.len() != mesh.num_vertices() {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        ScalarField {
            mesh_id: self.mesh_id,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-face tangent vectors, in each face's intrinsic frame (see [`super::FaceGeometry`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    #[serde(skip)]
    mesh_id: u64,
    pub values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn new(mesh: &TriMesh, values: Vec<[f64; 2]>) -> Result<Self> {
        mesh.check_len("vector field", values.len(), Per::Face)?;
        Ok(VectorField {
            mesh_id: mesh.id(),
            values,
        })
    }

    pub fn named(mesh: &TriMesh, name: &str, values: Vec<[f64; 2]>) -> Result<Self> {
        mesh.check_len(name, values.len(), Per::Face)?;
        Ok(VectorField {
            mesh_id: mesh.id(),
            values,
        })
    }

    pub fn zeros(mesh: &TriMesh) -> Self {
        VectorField {
            mesh_id: mesh.id(),
            values: vec![[0.0; 2]; mesh.num_faces()],
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn check_mesh(&self, mesh: &TriMesh) -> Result<()> {
        if self.mesh_id != mesh.id() || self.values.len() != mesh.num_faces() {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        VectorField {
            mesh_id: self.mesh_id,
            values: self.values.iter().map(|v| [v[0] * s, v[1] * s]).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v[0] == 0.0 && v[1] == 0.0)
    }
}

/// Per-face symmetric 2-tensors `[xx, xy, yy]` in each face's intrinsic orthonormal frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymTensorField {
    #[serde(skip)]
    mesh_id: u64,
    pub values: Vec<[f64; 3]>,
}

impl SymTensorField {
    pub fn new(mesh: &TriMesh, values: Vec<[f64; 3]>) -> Result<Self> {
        mesh.check_len("tensor field", values.len(), Per::Face)?;
        Ok(SymTensorField {
            mesh_id: mesh.id(),
            values,
        })
    }

    pub fn zeros(mesh: &TriMesh) -> Self {
        SymTensorField {
            mesh_id: mesh.id(),
            values: vec![[0.0; 3]; mesh.num_faces()],
        }
    }

    /// The metric itself in the intrinsic orthonormal frames.
    pub fn identity(mesh: &TriMesh) -> Self {
        SymTensorField {
            mesh_id: mesh.id(),
            values: vec![[1.0, 0.0, 1.0]; mesh.num_faces()],
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn check_mesh(&self, mesh: &TriMesh) -> Result<()> {
        if self.mesh_id != mesh.id() || self.values.len() != mesh.num_faces() {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymTensorField {
            mesh_id: self.mesh_id,
            values: self
                .values
                .iter()
                .map(|t| [t[0] * s, t[1] * s, t[2] * s])
                .collect(),
        }
    }

    /// Frobenius norm of the per-face tensors, area weighted when `areas` is given.
    pub fn norm(&self, areas: Option<&[f64]>) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(f, t)| {
                let w = areas.map_or(1.0, |a| a[f]);
                w * (t[0] * t[0] + 2.0 * t[1] * t[1] + t[2] * t[2])
            })
            .sum::<f64>()
            .sqrt()
    }
}
