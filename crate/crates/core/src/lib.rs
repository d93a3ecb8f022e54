//! Numerical core for robust (model-independent) variance-option bounds.
//!
//! The crate turns European option quotes into lower and upper price bounds
//! for options on realised variance. The bounds are attained by Root and Rost
//! solutions of the (multi-marginal) Skorokhod embedding problem for a
//! geometric Brownian motion; their barriers are recovered from obstacle
//! problems solved with an explicit finite-difference scheme in log-price.
//!
//! Pipeline, module by module:
//!
//! - [`market_data`]: quotes, mid prices, implied rate and dividend yield.
//! - [`models`]: Black-Scholes and Heston pricing, calibration, exponential
//!   tail correction of call curves.
//! - [`potentials`]: forward-measure call curves and potential functions,
//!   convex-order checks.
//! - [`barrier`]: Root/Rost obstacle solvers (single and multi-marginal),
//!   barrier extraction and confidence masks.
//! - [`pricing`]: discrete marginals, variance-call bounds, time-changed
//!   price paths.
//! - [`mc_verify`]: Monte-Carlo validation of embedded laws.
//!
//! The crate is `no_std` (with `alloc`); file formats, configuration and the
//! command line live in the companion `varbound` crate.

#![no_std]
// `num_traits::Float` supplies the float math in no_std builds; when std is linked
// anywhere in the graph its inherent methods shadow the trait and the import
// reads as unused.
#![allow(unused_imports)]

extern crate alloc;

pub mod barrier;
pub mod error;
pub mod market_data;
pub mod math;
pub mod mc_verify;
pub mod models;
pub mod potentials;
pub mod pricing;

pub use error::{Error, ErrorKind, Result};
