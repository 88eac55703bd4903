//! Symmetry-invariant quantum learning models for molecular potential energy
//! surfaces and force fields.
//!
//! The crate bundles an exact dense statevector simulator (up to 8 qubits),
//! the rotation/permutation/reflection-equivariant gate families built from
//! Heisenberg-exchange interactions, three ready-made model architectures
//! (diatomic, triatomic, and molecular dimer), exact adjoint differentiation
//! for both trainable weights and Cartesian inputs, a deterministic full-batch
//! ADAM training loop with energy and force losses, synthetic surface
//! generators, and an automated symmetry audit.
//!
//! Qubit indices are 1-based throughout; qubit 1 is the most significant bit
//! of a basis index, so |q1 q2 … qN⟩ maps to Σ_i q_i·2^(N−i).

pub mod audit;
pub mod autodiff;
pub mod blocks;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod model;
pub mod statevector;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
