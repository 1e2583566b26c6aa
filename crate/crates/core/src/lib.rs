//! Robust forward investment criteria under drift uncertainty.
//!
//! The crate simulates a single-asset market, builds the fractional Kelly
//! saddle point and its worst-case measure, checks the resulting criteria
//! by Monte Carlo, and solves small finite-tree markets exactly as a
//! reference.

pub mod cli;
pub mod criteria;
pub mod dualpde;
pub mod error;
pub mod measures;
pub mod numeric;
pub mod oracle;
pub mod paths;
pub mod strategies;
pub mod verify;

pub use error::{Error, Result};
