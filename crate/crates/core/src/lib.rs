//! Krylov model order reduction for semi-explicit index-1 DAEs.

// `!(x > tol)` is used on purpose so that NaN takes the failure branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod analysis;
pub mod error;
pub mod krylov;
pub mod linalg;
pub mod model;
pub mod reduce;
pub mod sdtransform;
pub mod verify;

pub use error::{MorError, Result};
