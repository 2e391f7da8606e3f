//! Stochastic kriging for simulation with covariates.

pub mod error;
pub mod kernels;
pub mod kriging;
pub mod linalg;
pub mod measures;
pub mod noise;
pub mod problems;
pub mod procedures;
pub mod rates;
pub mod sampling;
pub mod spectrum;

pub use error::{Error, Result};
