//! Numerical laboratory for Γ-sparse spherically homogeneous trees.
//!
//! The tree Laplacian splits into half-line Jacobi blocks; on those we compute
//! resolvents, transfer matrices, time-averaged transport moments and
//! local dimensions of spectral measures.

pub mod decompose;
pub mod dynamics;
pub mod error;
pub mod fractal;
pub mod hsfc;
pub mod jacobi;
pub mod quad;
pub mod transfer;
pub mod tree;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
