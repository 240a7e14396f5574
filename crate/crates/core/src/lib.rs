//! Variational phase-transition toolkit for the axial next-nearest-neighbour
//! Ising chain: statevector simulation, exact diagonalization, variational
//! optimization, a noisy device model, error mitigation and transition detection.

pub mod analysis;
pub mod cli;
pub mod engine;
pub mod error;
pub mod mitigation;
pub mod model;
pub mod noise;
pub mod pauli;
pub mod vqe;

pub use error::{Error, Result};
