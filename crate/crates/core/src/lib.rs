//! Desk-scale laboratory for blockage-resilient near-field beam training.
//!
//! The crate simulates two-dimensional scalar propagation from a uniform
//! linear array through rectangular obstacles, generates steering, focusing
//! and Airy-beam codebooks, evaluates the analytic Airy caustic, and runs
//! exhaustive, hierarchical and network-assisted beam searches.
//!
//! Module map:
//!
//! * [`scenario`]: scene description, simulation grid, blockage masks.
//! * [`field`]: Rayleigh–Sommerfeld and Fresnel oracles plus the
//!   angular-spectrum propagator.
//! * [`codebook`]: phase profiles, codewords and sampled codebooks.
//! * [`trajectory`]: caustic, paraxial trajectory and maximum curving range.
//! * [`search`]: DFT sweep, exhaustive/hierarchical/learned beam training.
//! * [`dataset`]: supervised sample generation and the record file format.
//! * [`nn`]: multi-task attention network inference and weights container.
//! * [`eval`]: metric binning and CSV emission.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod codebook;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod field;
pub mod nn;
pub mod scenario;
pub mod search;
pub mod trajectory;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
