//! Convergence bounds along a chain ensemble, debiased by averaging over an
//! asymptote window of post-convergence iterations.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::assignment::LeaveOneOutCosts;
use crate::error::{invalid, Result};
use crate::mcmc::ensemble::ChainEnsemble;
use crate::wasserstein::{combine_bounds, transport_costs, BoundEstimate};

/// Iterations `start, start + stride, ..., <= end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AsymptoteWindow {
    pub start: usize,
    pub end: usize,
    pub stride: usize,
}

impl AsymptoteWindow {
    pub fn iterations(&self) -> Result<Vec<usize>> {
        if self.stride == 0 {
            return Err(invalid("asymptote stride must be at least 1"));
        }
        if self.end < self.start {
            return Err(invalid("asymptote window end precedes its start"));
        }
        Ok((self.start..=self.end).step_by(self.stride).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceBoundTrajectory {
    pub iterations: Vec<usize>,
    /// Upper bounds on `W2²(π_t, π_∞)` with Gaussian intervals.
    pub upper: Vec<BoundEstimate>,
    /// Lower bounds on `W2(π_t, π_∞)` with Chebyshev intervals.
    pub lower: Vec<BoundEstimate>,
    /// Signed squares of `lower`, with the mapped intervals.
    pub lower_sq: Vec<BoundEstimate>,
    pub reference_iteration: usize,
    pub asymptote_set: Vec<usize>,
    pub alpha: f64,
}

impl ConvergenceBoundTrajectory {
    pub fn upper_values(&self) -> Vec<f64> {
        self.upper.iter().map(|b| b.value).collect()
    }

    pub fn lower_sq_values(&self) -> Vec<f64> {
        self.lower_sq.iter().map(|b| b.value).collect()
    }
}

/// Bounds for every recorded `t < T`.
pub fn convergence_bounds(
    ensemble: &ChainEnsemble,
    reference_iteration: usize,
    asymptote_set: &[usize],
    alpha: f64,
) -> Result<ConvergenceBoundTrajectory> {
    let times: Vec<usize> = ensemble
        .recorded_iterations()
        .iter()
        .copied()
        .filter(|&t| t < reference_iteration)
        .collect();
    convergence_bounds_at(ensemble, reference_iteration, asymptote_set, alpha, &times)
}

/// Bounds at the given recorded iterations. For each `t`,
/// `U_t = W2²(π̂_t, π̂_T) - mean_{T' ∈ 𝒜} W2²(π̂_{T'}, π̂_T)` and
/// `L_t = W2(π̂_t, π̂_T) - mean_{T' ∈ 𝒜} W2(π̂_{T'}, π̂_T)`, with leave-one-out
/// replicates deleting one chain from every measure.
pub fn convergence_bounds_at(
    ensemble: &ChainEnsemble,
    reference_iteration: usize,
    asymptote_set: &[usize],
    alpha: f64,
    times: &[usize],
) -> Result<ConvergenceBoundTrajectory> {
    if asymptote_set.is_empty() {
        return Err(invalid("asymptote set is empty"));
    }
    if ensemble.n_chains() < 2 {
        return Err(invalid("need at least two chains for leave-one-out replicates"));
    }
    let reference = ensemble.measure_at(reference_iteration)?;
    for &t in asymptote_set {
        if t >= reference_iteration {
            return Err(invalid(format!("asymptote iteration {t} is not below T = {reference_iteration}")));
        }
        ensemble.states_at(t)?;
    }
    for &t in times {
        ensemble.states_at(t)?;
    }

    let mut needed: Vec<usize> = asymptote_set.iter().chain(times).copied().collect();
    needed.sort_unstable();
    needed.dedup();
    let costs: BTreeMap<usize, LeaveOneOutCosts> = needed
        .par_iter()
        .map(|&t| Ok((t, transport_costs(&ensemble.measure_at(t)?, &reference)?)))
        .collect::<Result<_>>()?;

    let baselines: Vec<&LeaveOneOutCosts> = asymptote_set.iter().map(|t| &costs[t]).collect();
    let mut upper = Vec::with_capacity(times.len());
    let mut lower = Vec::with_capacity(times.len());
    let mut lower_sq = Vec::with_capacity(times.len());
    for t in times {
        let set = combine_bounds(&costs[t], &baselines)?.with_intervals(alpha)?;
        upper.push(set.upper);
        lower.push(set.lower);
        lower_sq.push(set.lower_squared);
    }
    Ok(ConvergenceBoundTrajectory {
        iterations: times.to_vec(),
        upper,
        lower,
        lower_sq,
        reference_iteration,
        asymptote_set: asymptote_set.to_vec(),
        alpha,
    })
}

/// First iteration whose value is at or below `threshold`.
pub fn mixing_time(iterations: &[usize], values: &[f64], threshold: f64) -> Option<usize> {
    iterations
        .iter()
        .zip(values)
        .find(|(_, &v)| v <= threshold)
        .map(|(&t, _)| t)
}
