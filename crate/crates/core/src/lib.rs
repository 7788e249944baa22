//! Exact diagonalization and qubit dynamics for triangular spin-1/2 lattices
//! with Dzyaloshinskii-Moriya interaction.
//!
//! The crate is organized bottom-up:
//!
//! - [`lattice`]: hexagonal triangular patches, bonds and DMI axes
//! - [`operators`]: state vectors and the matrix-free Hamiltonian
//! - [`eigensolver`]: Lanczos lowest eigenpairs and a dense oracle
//! - [`observables`]: spin fields, chirality, charge, structure factor, entropy
//! - [`dynamics`]: driven many-body time evolution and logical Bloch vectors
//! - [`twolevel`]: the projected qubit, Lindblad decay, readout, Bell circuit
//! - [`sweep`]: phase diagrams and DMI series

pub mod dynamics;
pub mod eigensolver;
pub mod error;
pub mod lattice;
pub mod observables;
pub mod operators;
pub mod sweep;
pub mod twolevel;

pub use error::{Result, SkyrError};
