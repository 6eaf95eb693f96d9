//! Finite volume solver for the two-dimensional rotating shallow water
//! equations with a semi-implicit, energy-stable, well-balanced scheme,
//! plus the diagnostic machinery (conservation ledgers, convergence studies,
//! statistical refinement errors) needed to reproduce the standard benchmark
//! experiments at desk scale.

pub mod cases;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod kconv;
pub mod linear;
pub mod run;
pub mod scheme;
pub mod state;

pub use error::{Error, Result};
