//! Discrete quasi-local energy on closed convex surfaces.
//!
//! Surfaces are closed genus-0 triangle meshes carrying an intrinsic edge-length
//! metric. On top of the mesh operators the crate provides isometric embedding into
//! flat space, the quasi-local energy of boundary data, its first and second
//! variations, stability estimates, and a Newton/continuation solver for critical
//! time functions.

pub mod dual;
pub mod embedding;
pub mod energy;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod oracles;
pub mod solver;
pub mod variation;

pub use embedding::{embed, shape_data, EmbedConfig, Embedding, ShapeData};
pub use energy::{brown_york_mass, wang_yau_energy, BoundaryData, EnergyReport};
pub use error::{Error, Result};
pub use solver::{continuation_solve, newton_solve, DataFamily, SolveReport, SolverConfig};
pub use mesh::{
    build_icosphere, first_nonzero_eigenvalue, GalerkinOperator, MetricField, ScalarField,
    SymTensorField, TriMesh, VectorField,
};
pub use variation::{stability_beta, QuadraticForms, StabilityReport};
