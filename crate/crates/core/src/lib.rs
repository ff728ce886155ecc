//! Data-driven spectral analysis of Koopman and transfer operators with residual
//! control.
//!
//! The pipeline is: sample a map ([`dynamics`]), evaluate a dictionary
//! ([`dictionaries`]), assemble a Gram triple `(G, A, J)` in an inner-product space
//! ([`spaces`]), then compute EDMD matrices and residuals ([`edmd`]). Kernelized
//! variants live in [`kernel`]; [`spectral`] classifies eigenvalues and clusters
//! eigenvectors.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dictionaries;
pub mod dynamics;
pub mod edmd;
pub mod error;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod residual;
pub mod spaces;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
