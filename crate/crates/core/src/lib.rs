//! Overlapping Schwarz preconditioners with spectral coarse spaces for
//! Stokes flow and nearly incompressible elasticity in two dimensions.

pub mod coarse;
pub mod decomposition;
pub mod discretization;
pub mod error;
pub mod harness;
pub mod mesh;
pub mod par;
pub mod problems;
pub mod schwarz;
pub mod solvers;

pub use error::{Error, Result};
