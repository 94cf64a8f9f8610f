//! Multiclass lattice design toolkit: a catalog of periodic lattice unit
//! cells, their homogenized stiffness, a latent-variable Gaussian process
//! surrogate over (volume fraction, class), and an eigenfrequency topology
//! optimizer that picks a volume fraction and a class for every element.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bitmap;
pub mod config;
pub mod error;
pub mod fem;
pub mod homogenization;
pub mod lattice;
pub mod library;
pub mod lvgp;
pub mod mma;
pub mod topopt;
pub mod sparse;
pub mod stiffness;

pub use bitmap::Bitmap;
pub use error::{Error, Result};
pub use lattice::{ClassLabel, LatticeClass, Microstructure};
pub use stiffness::{BaseMaterial, StiffnessTensor};
