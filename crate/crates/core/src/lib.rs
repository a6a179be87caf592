//! Steady states and second-order photon correlations of small ensembles of
//! three-level ladder atoms with Rydberg-Rydberg interactions.
//!
//! Units throughout: rates in units of the intermediate-state decay rate,
//! times in its inverse, lengths in probe wavelengths, `hbar = 1`.

pub mod correlation;
pub mod error;
pub mod liouville;
pub mod model;
pub mod operator_algebra;
pub mod trajectory;

pub use error::{Error, Result};
