//! Coupled backward SDEs with jumps driven by general Lévy measures.
//!
//! Forward jump-diffusion simulation under truncated measures, least-squares
//! Monte Carlo for the backward system, nonlocal operators on lattice value
//! fields, a 1D IMEX finite-difference oracle and a suite of numerical checks.

pub mod bsde;
pub mod error;
pub mod fd_oracle;
pub mod field;
pub mod growth;
pub mod io;
pub mod levy;
pub mod model;
pub mod nonlocal;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod verify;
pub mod zoo;

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use bsde::{solve_frozen_nonlocal, solve_lsmc, picard_subinterval, truncation_study, Basis, BsdeSolution, QEstimator, QMeasure, SolverSettings};
pub use error::{Error, Result};
pub use fd_oracle::{residual, solve_fd, FdProblem};
pub use field::{Field, FnField, Slice, ValueField};
pub use levy::{Decay, JumpMeasure, JumpSample, LevyMeasure, TruncatedMeasure, ValidationReport};
pub use model::{CouplingMode, Dims, ModelSpec};
pub use sde::{PathBundle, TimeGrid};
