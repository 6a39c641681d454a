#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Thermodynamics of a quantum Otto cycle whose working medium is a scalar
//! field in a one-dimensional cavity with a moving wall.
//!
//! The crate computes the dynamical-Casimir friction energy deposited by a
//! finite-time compression, its analytic upper bound, the resulting engine and
//! refrigerator figures of merit, and cross-checks all of it against a
//! truncated Fock-space evolution.

pub mod cli;
pub mod cycle;
pub mod error;
pub mod fock_oracle;
pub mod friction;
pub mod quadrature;
pub mod spectrum;
pub mod trajectory;

pub use error::{Error, Result};
pub use quadrature::{integrate_1d, integrate_2d_oracle, Estimate, QuadratureSpec};
pub use spectrum::{CavityConfig, ThermalBath};
pub use trajectory::Trajectory;
