//! Population spectrum reconstruction from sample covariance spectra.

pub mod cli;
pub mod error;
pub mod lab;
pub mod mp;
pub mod quadrature;
pub mod reconstruct;
pub mod rng;
pub mod secular;
pub mod spectrum;

pub use error::{Error, Result};
