//! Frequency-domain full-waveform inversion for 3D VTI acoustic media.
//!
//! The crate is organised in the order data flows through an inversion:
//! [`model`] holds the subsurface grids, [`discretize`] turns a model and a
//! frequency into a sparse impedance matrix, [`solver`] factorizes and solves
//! it with a multifrontal method that optionally compresses fronts into block
//! low-rank form, [`fwi`] drives the adjoint-state optimisation and [`cli`]
//! exposes everything through the `horst` binary.

pub mod cli;
pub mod discretize;
pub mod error;
pub mod fwi;
pub mod model;
pub mod solver;
pub mod sparse;

pub use error::{HorstError, Result};

/// Double-precision complex scalar used for all physics.
pub type C64 = num_complex::Complex<f64>;
/// Single-precision complex scalar used by the production solver path.
pub type C32 = num_complex::Complex<f32>;
