//! Numerical laboratory for discrete-time fractional Brownian motion: exact
//! fractional Gaussian noise, Toeplitz linear algebra for its conditional
//! laws, and occupation-time Monte Carlo against Mittag-Leffler limits.

pub mod conditional;
pub mod error;
pub mod fgn_model;
pub mod mittag_leffler;
pub mod occupation;
mod quadrature;
pub mod sampler;
pub mod stats;
pub mod toeplitz;

pub use error::{Error, Result};
pub use fgn_model::HurstParam;
pub use sampler::RngSeed;
