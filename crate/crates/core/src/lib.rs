//! Finite-alphabet toolkit for content identification with lossy recovery.
//!
//! Modules, bottom up:
//!
//! - [`prob`]: pmfs, channels, the source/observation system, information
//!   functionals, finite random variables and exact i.i.d. tails.
//! - [`bio`]: biometrical identification (no compression, no recovery):
//!   capacity, correct-decoding exponents, second-order and one-shot bounds.
//! - [`region`]: the rate-distortion region, its supporting-hyperplane form
//!   and the excess-distortion exponent upper bound.
//! - [`exponent`]: the strong-converse rate function and its tilted lower bound.
//! - [`sim`]: Monte Carlo of enrollment, identification and recovery, plus an
//!   exhaustive oracle for tiny instances.
//! - [`cli`] and [`acceptance`]: the batch front end and the verification suite.

pub mod acceptance;
pub mod bio;
pub mod cli;
pub mod error;
pub mod exponent;
pub mod prob;
pub mod region;
pub mod search;
pub mod sim;

pub use error::{Error, Result};
