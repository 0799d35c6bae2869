//! Heating coefficients of driven, nearly integrable billiards.
//!
//! The crate computes the linear-response (Kubo) absorption coefficient and
//! the semi-linear response coefficient obtained from a resistor network in
//! energy space, for a rectangular box whose floor carries a Gaussian bump.
//!
//! * [`billiard`] quantizes the box and transforms the wall perturbation.
//! * [`matrixstats`] selects the near-diagonal band and its averages.
//! * [`network`] builds the resistor network and solves it.
//! * [`rmt`] samples log-normal random-matrix twins.
//! * [`vrh`] holds the closed-form estimates.
//! * [`pipeline`] evaluates one sweep point end to end.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod billiard;
pub mod error;
pub mod matrix;
pub mod matrixstats;
pub mod network;
pub mod pipeline;
pub mod quadrature;
pub mod rmt;
pub mod seeds;
pub mod vrh;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
