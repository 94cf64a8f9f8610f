//! Macroscale plane-stress finite elements and the generalized eigenproblem.

pub mod assembly;
pub mod boundary;
pub mod eigen;
pub mod element;
pub mod mesh;

pub use assembly::{write_matrix_market, Assembler, ElementState};
pub use boundary::{BoundaryPreset, BoundarySpec, DofMap, PointMass};
pub use eigen::{multiplicity_check, solve_eigs, EigenSolution, Multiplicity, MULTIPLICITY_TOLERANCE};
pub use element::ElementBasis;
pub use mesh::Mesh;
