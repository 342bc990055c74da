//! Numerical toolkit for quadratic-cost optimal transport: exact 1D transport,
//! discrete and entropic 2D solvers, density paths, the linearized
//! Monge–Ampère response problem and second-variation checks.

pub mod error;
pub mod measures;
pub mod ot1d;
pub mod ot_discrete;
pub mod linear_response;
pub mod paths;
pub mod second_variation;
pub mod experiments;

pub use error::{Error, Result};
