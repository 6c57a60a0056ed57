//! Discrete weighted dbar-Neumann laboratory on C^n, n in {1, 2}.
//!
//! Weights and Levi forms live in [`weight`], grids and forms in [`grid`]
//! and [`form`], the difference complex in [`dbar`], eigen-solvers in
//! [`spectral`], the localization diagnostics in [`diagnostics`] and the
//! boundary Property (P) certificates in [`property_p`].

pub mod dbar;
pub mod diagnostics;
pub mod error;
pub mod form;
pub mod grid;
pub mod operator;
pub mod property_p;
pub mod spectral;
pub mod weight;

pub use error::{LabError, Result};
pub use num_complex::Complex64 as C64;
