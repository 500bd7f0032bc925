//! The `estimate` command: bounds from three sample files.

use std::path::Path;

use serde::Serialize;
use wassbound::wasserstein::{decay_constant, estimate_bounds, BoundEstimate, EmpiricalMeasure};

use crate::error::{data_err, CliError, Result};
use crate::samples::read_samples;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateEntry {
    pub value: f64,
    pub jackknife_variance: f64,
    pub ci: Interval,
}

impl From<&BoundEstimate> for EstimateEntry {
    fn from(b: &BoundEstimate) -> Self {
        let (lo, hi) = b.ci.expect("intervals attached");
        Self {
            value: b.value,
            jackknife_variance: b.jackknife_variance,
            ci: Interval { lo, hi },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub upper: EstimateEntry,
    pub lower: EstimateEntry,
    pub lower_squared: EstimateEntry,
    pub decay_constant: f64,
}

pub fn estimate(nu: &EmpiricalMeasure, mu: &EmpiricalMeasure, mu_prime: &EmpiricalMeasure, alpha: f64) -> Result<EstimateReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if nu.n() < 2 {
        return Err(CliError::Data("at least two samples per measure are needed".into()));
    }
    let set = estimate_bounds(nu, mu, mu_prime)
        .and_then(|s| s.with_intervals(alpha))
        .map_err(data_err)?;
    Ok(EstimateReport {
        n: nu.n(),
        d: nu.d(),
        alpha,
        upper: (&set.upper).into(),
        lower: (&set.lower).into(),
        lower_squared: (&set.lower_squared).into(),
        decay_constant: decay_constant(mu, nu).map_err(data_err)?,
    })
}

pub fn estimate_files(nu: &Path, mu: &Path, mu_prime: &Path, alpha: f64) -> Result<EstimateReport> {
    estimate(&read_samples(nu)?, &read_samples(mu)?, &read_samples(mu_prime)?, alpha)
}
