//! Spectral Galerkin solver for time-periodic fluid-structure interaction in
//! a periodic channel whose top wall is a nonlinear Koiter plate.

pub mod anderson;
mod error;
mod interp;

pub mod assembly;
pub mod basis;
pub mod diagnostics;
pub mod driver;
pub mod fixed_point;
pub mod geometry;
pub mod integrator;
pub mod plate;

pub use error::{Error, Result};
