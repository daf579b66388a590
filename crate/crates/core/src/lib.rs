//! Learn stochastic differential equations from sample paths and compute
//! their mean residence time and escape probability.
//!
//! The pipeline: simulate paths with Euler-Maruyama while recording the
//! Brownian increments ([`sde`]), regress increments on a polynomial library
//! extended with `dB/dt` columns ([`basis`], [`learn`]), then solve the
//! generator's Dirichlet problems by finite differences ([`generator`],
//! [`pde`]) and cross-check them by direct simulation ([`oracle`]).
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod error;
pub mod generator;
pub mod learn;
pub mod linalg;
pub mod oracle;
pub mod pde;
pub mod report;
pub mod scalar;
pub mod sde;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SdeModel64 = sde::SdeModel<f64>;
pub type TrajectoryRecord64 = sde::TrajectoryRecord<f64>;
pub type CoefficientTable64 = learn::CoefficientTable<f64>;
pub type Domain64 = pde::Domain<f64>;
pub type Grid64 = pde::Grid<f64>;
pub type FieldSolution64 = pde::FieldSolution<f64>;
pub type ExitEstimate64 = oracle::ExitEstimate<f64>;

pub type SdeModel32 = sde::SdeModel<f32>;
pub type FieldSolution32 = pde::FieldSolution<f32>;
