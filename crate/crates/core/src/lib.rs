//! Numerical core for the ideal-gas Brinkman-Fourier system.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the closed-form
//! ideal-gas thermodynamics, a generic free-energy derivation engine, a
//! cell-centered finite-volume calculus on rectangles, the Brinkman velocity
//! solve, the regularized time stepping of density and internal energy, and the
//! diagnostics that check every balance law and inequality on the discrete
//! trajectory. File formats, configuration and the command-line driver live in
//! the companion `brinkman-fourier-lab` crate.
#![no_std]
// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod brinkman;
pub mod cg;
pub mod constitutive;
pub mod diagnostics;
pub mod envara;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod inequalities;
pub mod math;

pub use constitutive::{LocalThermoPoint, ModelParams};
pub use error::{Error, Result};
pub use evolution::{State, TimeStepConfig};
pub use grid::{Grid, ScalarField, VectorField};
