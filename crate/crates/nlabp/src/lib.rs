//! Nonlocal Pucci operators of order σ, the σ-order envelope, the Riesz
//! potential of an envelope, and certificates for the nonlocal
//! Aleksandrov–Bakelman–Pucci estimate on uniform grids.

// Input checks use `!(x > 0.0)` so that NaN is rejected along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod base;
pub mod certify;
pub mod cli;
pub mod envelope;
pub mod error;
pub mod fft;
pub mod linalg;
pub mod nonlocal_ops;
pub mod potential;
pub mod quadrature;
pub mod stencil;

pub use base::{Exterior, Field, Grid, Interp, Point, SigmaParams};
pub use error::{Error, Result};
