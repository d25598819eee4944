//! Spectral-Galerkin simulation of density-dependent incompressible
//! Navier–Stokes flow on the periodic square `[0, 2π)²`, with monitors for
//! the energy, regularity and uniqueness estimates along a run.

pub mod basis;
pub mod config;
pub mod error;
pub mod estimates;
pub mod fields;
pub mod grid;
pub mod gronwall;
pub mod io;
pub mod quadrature;
pub mod solver;
pub mod studies;
pub mod transport;

pub use config::RunConfig;
pub use error::{Error, Result};
