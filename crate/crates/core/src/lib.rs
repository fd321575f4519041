//! Utility theory and cumulative prospect theory models of travel mode
//! choice under travel-time uncertainty.

pub mod choice;
pub mod cpt;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod prospect;
pub mod quadrature;
pub mod roots;

pub use error::{Error, Result};
