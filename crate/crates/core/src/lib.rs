//! Quantum-simulated impurity solver with a self-consistent DMFT loop.
//!
//! The crate simulates the quantum subroutines of a hybrid impurity solver
//! (ground-state VQE, variational time-evolution compression, Green's
//! function measurement) on an exact statevector backend, performs the
//! classical post-processing (Lehmann fit, Matsubara transforms, bath
//! fitting) and closes the self-consistency loop for the Bethe-lattice
//! Hubbard model. Every stage can be cross-checked against an exact
//! diagonalization oracle.

pub mod circuits;
pub mod cli;
pub mod dmft;
pub mod greens;
pub mod model;
pub mod opt;
pub mod oracle;
pub mod pauli;
pub mod sim;
pub mod validate;
pub mod variational;
