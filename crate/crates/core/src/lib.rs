#![no_std]
#![warn(missing_docs)]

//! Photon statistics of squeezed light transmitted through disordered
//! waveguides that absorb or amplify.
//!
//! The crate has three layers:
//!
//! - [`medium`]: random scattering matrices of multimode waveguides, built
//!   by composing thin random slices with the Redheffer star product.
//! - [`photostats`] and [`analytics`]: exact photocount cumulants for a
//!   single medium, and closed-form ensemble averages in the diffusive
//!   regime.
//! - [`ensemble`] and [`fock`]: Monte Carlo averaging over media and an
//!   independent Fock-space oracle for single-mode channels.
//!
//! Everything here is `no_std` with `alloc`. The `std` feature only turns on
//! runtime SIMD detection in the matrix kernels.

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod analytics;
pub mod ensemble;
mod error;
pub mod fock;
pub mod linalg;
pub mod medium;
pub mod photostats;
pub mod seed;

pub use error::{Error, Result};
pub use num_complex::Complex64;
