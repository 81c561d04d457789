//! SABR swaption pricing by scaling symmetry.
//!
//! The SABR backward PDE in `(F, alpha, t)` is rewritten in coordinates where
//! one variable is invariant under the model's scaling symmetry and the other
//! shifts. A Fourier series along the shifting coordinate then splits the
//! problem into independent 1+1 dimensional complex PDEs, one per mode.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod calib;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod model;
pub mod montecarlo;
pub mod pde_coeffs;
pub mod pde_engine;
pub mod pricer;
pub mod spectral;
mod tridiag;

pub use error::{Result, SabrError};
pub use model::{SabrParams, VariableKind, VariableSet};
