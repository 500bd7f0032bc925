//! Empirical Wasserstein bounds on MCMC convergence from independent chain
//! ensembles, with leave-one-out transport costs and jackknife intervals.

pub mod assignment;
pub mod coupling;
pub mod error;
pub mod gaussian;
pub mod jackknife;
pub mod mcmc;
pub mod wasserstein;

pub use error::{Error, Result};
