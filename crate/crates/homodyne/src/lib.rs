//! Homodyne quantum-state tomography with numerically stable pattern
//! functions, recursive Wigner-function synthesis and a synthetic-data
//! simulator.

pub mod error;
pub mod formats;
pub mod patterns;
pub mod real;
pub mod reconstruct;
pub mod simulate;

pub use error::{Error, Result};
pub mod wigner;
