//! Numerical teleportation benchmarks for displaced thermal states and for
//! `n` identically prepared qubits.
//!
//! The crate is organised bottom-up:
//!
//! * [`fock`]: truncated single-mode Fock numerics and the heterodyne-prepare channel.
//! * [`gaussian`]: moment-level Gaussian states and operations.
//! * [`benchmark`]: minmax risk, the covariant channel family and its optimisation.
//! * [`schur_weyl`]: block decomposition of permutation-invariant qubit states.
//! * [`lan`]: the channels between qubit blocks and the classical-quantum Gaussian model.
//! * [`protocol`]: the adaptive measure-and-prepare protocol and the lower-bound construction.

pub mod benchmark;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod lan;
pub mod linalg;
pub mod protocol;
pub mod rng;
pub mod schur_weyl;
pub mod spin;

pub use error::{Error, Result};
