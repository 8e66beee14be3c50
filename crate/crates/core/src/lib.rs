//! Semi-parametric long-memory estimation with pre-filtered sieve bootstrap
//! bias correction, plus a Monte Carlo harness for comparing the variants.

pub mod ar_sieve;
pub mod arfima;
pub mod bootstrap;
pub mod error;
pub mod estimators;
pub mod fracdiff;
pub mod harness;
pub mod spectral;

pub use error::{Error, Result};
