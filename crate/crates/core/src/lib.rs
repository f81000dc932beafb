//! Shear-advected Patlak-Keller-Segel simulator with hypocoercivity diagnostics.

pub mod error;
pub mod checkpoint;
pub mod grid;
pub mod harness;
pub mod hypo;
pub mod integrator;
pub mod model;
pub mod monitors;
pub mod spectral;
pub mod tridiag;
pub mod yops;

pub use error::{PksError, Result};
