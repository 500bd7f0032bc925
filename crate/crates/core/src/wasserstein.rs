//! Empirical 2-Wasserstein distances and the debiased three-sample bound
//! estimators.
//!
//! For samples `nu` (from ν), `mu` (from μ, the reference) and `mu_prime`
//! (a second sample from μ):
//!
//! * `U = W2²(ν̂, μ̂) - W2²(μ̂', μ̂)` is an upper bound on `W2²(ν, μ)` in
//!   expectation when ν is overdispersed relative to μ.
//! * `L = W2(ν̂, μ̂) - W2(μ̂', μ̂)` bounds `W2(ν, μ)` from below in absolute
//!   expectation with no further assumption.
//! * `L_sq = sign(L) L²` puts `L` on the squared scale.
//!
//! The reference sample `mu` must be independent of the other two; that is
//! a property of how the caller draws samples and is not checked. Neither
//! estimator is clamped to be nonnegative: a negative value is informative.
//!
//! Leave-one-out replicates use paired deletion: replicate `i` drops the
//! `i`-th point from every measure at once.

use crate::assignment::{flapjack_par, solve_assignment, AssignmentSolution, CostMatrix, LeaveOneOutCosts};
use crate::error::{invalid, Error, Result};
use crate::jackknife::{chebyshev_ci, gaussian_ci, jackknife_variance, signed_square, signed_square_ci};

/// Equally weighted point cloud: `n` points in `d` dimensions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    n: usize,
    d: usize,
    points: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(n: usize, d: usize, points: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(invalid(format!("empirical measure needs n >= 1 and d >= 1, got n = {n}, d = {d}")));
        }
        if points.len() != n * d {
            return Err(Error::ShapeMismatch(format!(
                "expected {} coordinates for n = {n}, d = {d}, got {}",
                n * d,
                points.len()
            )));
        }
        if let Some(k) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("point {}, coordinate {}", k / d, k % d)));
        }
        Ok(Self { n, d, points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::ShapeMismatch("all points must have the same dimension".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    /// One-dimensional sample.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.points
    }

    /// The measure with point `i` removed.
    pub fn without(&self, i: usize) -> Result<Self> {
        if self.n < 2 || i >= self.n {
            return Err(invalid(format!("cannot delete point {i} from a sample of size {}", self.n)));
        }
        let mut points = Vec::with_capacity((self.n - 1) * self.d);
        for k in (0..self.n).filter(|&k| k != i) {
            points.extend_from_slice(self.point(k));
        }
        Self::new(self.n - 1, self.d, points)
    }

    /// Every point translated by `shift`.
    pub fn shifted(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.d {
            return Err(Error::ShapeMismatch(format!("shift has length {}, measure has d = {}", shift.len(), self.d)));
        }
        let points = self
            .points
            .chunks_exact(self.d)
            .flat_map(|p| p.iter().zip(shift).map(|(x, s)| x + s))
            .collect();
        Self::new(self.n, self.d, points)
    }

    pub fn mean_squared_norm(&self) -> f64 {
        self.points.iter().map(|x| x * x).sum::<f64>() / self.n as f64
    }
}

fn check_pair(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<()> {
    if a.n != b.n || a.d != b.d {
        return Err(Error::ShapeMismatch(format!(
            "measures must share n and d: ({}, {}) vs ({}, {})",
            a.n, a.d, b.n, b.d
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `C[i][j] = ||a_i - b_j||²`.
pub fn squared_distance_costs(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<CostMatrix> {
    check_pair(a, b)?;
    CostMatrix::from_fn(a.n, |i, j| squared_distance(a.point(i), b.point(j)))
}

/// Squared empirical 2-Wasserstein distance: the minimum over permutations
/// of the mean squared Euclidean displacement.
pub fn w2_squared(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<(f64, AssignmentSolution)> {
    let costs = squared_distance_costs(a, b)?;
    let solution = solve_assignment(&costs)?;
    if a.d == 1 {
        debug_assert!({
            let sorted = w2_squared_1d(a, b)?;
            (sorted - solution.objective).abs() <= 1e-9 * sorted.abs().max(1.0)
        });
    }
    Ok((solution.objective, solution))
}

/// One-dimensional shortcut: the optimal coupling pairs order statistics.
pub fn w2_squared_1d(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    check_pair(a, b)?;
    if a.d != 1 {
        return Err(invalid(format!("sorted pairing needs d = 1, got d = {}", a.d)));
    }
    let mut xs = a.points.clone();
    let mut ys = b.points.clone();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let total: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(total / a.n as f64)
}

/// Paired leave-one-out transport costs between two measures.
pub fn transport_costs(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<LeaveOneOutCosts> {
    flapjack_par(&squared_distance_costs(a, b)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    UpperSquared,
    LowerUnsquared,
    LowerSquaredSigned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundEstimate {
    pub kind: BoundKind,
    pub value: f64,
    pub loo_values: Vec<f64>,
    pub jackknife_variance: f64,
    pub ci: Option<(f64, f64)>,
}

impl BoundEstimate {
    pub fn from_replicates(kind: BoundKind, value: f64, loo_values: Vec<f64>) -> Result<Self> {
        let jk = jackknife_variance(&loo_values)?;
        Ok(Self {
            kind,
            value,
            loo_values,
            jackknife_variance: jk.variance,
            ci: None,
        })
    }

    fn jackknife(&self) -> crate::jackknife::JackknifeResult {
        crate::jackknife::JackknifeResult {
            variance: self.jackknife_variance,
            n: self.loo_values.len(),
            mean_loo: self.loo_values.iter().sum::<f64>() / self.loo_values.len() as f64,
        }
    }

    pub fn with_gaussian_ci(mut self, alpha: f64) -> Result<Self> {
        self.ci = Some(gaussian_ci(self.value, &self.jackknife(), alpha)?);
        Ok(self)
    }

    pub fn with_chebyshev_ci(mut self, alpha: f64) -> Result<Self> {
        self.ci = Some(chebyshev_ci(self.value, &self.jackknife(), alpha)?);
        Ok(self)
    }

    /// `sign(L) L²` of a lower-bound estimate. Replicates are transformed the
    /// same way; an interval on `L`, if present, is carried over through the
    /// signed square.
    pub fn signed_squared(lower: &BoundEstimate) -> Result<Self> {
        if lower.kind != BoundKind::LowerUnsquared {
            return Err(invalid("signed square applies to the unsquared lower bound"));
        }
        let mut out = Self::from_replicates(
            BoundKind::LowerSquaredSigned,
            signed_square(lower.value),
            lower.loo_values.iter().map(|&l| signed_square(l)).collect(),
        )?;
        out.ci = lower.ci.map(|ci| signed_square_ci(lower.value, ci));
        Ok(out)
    }
}

/// The three estimators computed together from shared transport solves.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSet {
    pub upper: BoundEstimate,
    pub lower: BoundEstimate,
    pub lower_squared: BoundEstimate,
}

impl BoundSet {
    /// Gaussian interval on `U`, Chebyshev interval on `L`, and the signed
    /// square of the latter on `L_sq`.
    pub fn with_intervals(self, alpha: f64) -> Result<Self> {
        let upper = self.upper.with_gaussian_ci(alpha)?;
        let lower = self.lower.with_chebyshev_ci(alpha)?;
        let lower_squared = BoundEstimate::signed_squared(&lower)?;
        Ok(Self {
            upper,
            lower,
            lower_squared,
        })
    }
}

/// Combines the transport costs of a target pair with those of one or more
/// baseline pairs sharing the same reference measure:
/// `U = T - mean(B)`, `L = sqrt(T) - mean(sqrt(B))`, replicate by replicate.
/// A single baseline gives the plain three-sample estimators.
pub fn combine_bounds(target: &LeaveOneOutCosts, baselines: &[&LeaveOneOutCosts]) -> Result<BoundSet> {
    if baselines.is_empty() {
        return Err(invalid("at least one baseline transport cost is required"));
    }
    let n = target.loo_costs.len();
    if baselines.iter().any(|b| b.loo_costs.len() != n) {
        return Err(Error::ShapeMismatch("baseline sample sizes differ from the target".into()));
    }
    let m = baselines.len() as f64;
    let root = |c: f64| c.max(0.0).sqrt();

    let upper_value = target.full_cost - baselines.iter().map(|b| b.full_cost).sum::<f64>() / m;
    let lower_value = root(target.full_cost) - baselines.iter().map(|b| root(b.full_cost)).sum::<f64>() / m;

    let mut upper_loo = target.loo_costs.clone();
    let mut lower_loo: Vec<f64> = target.loo_costs.iter().map(|&c| root(c)).collect();
    for b in baselines {
        for i in 0..n {
            upper_loo[i] -= b.loo_costs[i] / m;
            lower_loo[i] -= root(b.loo_costs[i]) / m;
        }
    }

    let upper = BoundEstimate::from_replicates(BoundKind::UpperSquared, upper_value, upper_loo)?;
    let lower = BoundEstimate::from_replicates(BoundKind::LowerUnsquared, lower_value, lower_loo)?;
    let lower_squared = BoundEstimate::signed_squared(&lower)?;
    Ok(BoundSet {
        upper,
        lower,
        lower_squared,
    })
}

fn check_triple(nu: &EmpiricalMeasure, mu: &EmpiricalMeasure, mu_prime: &EmpiricalMeasure) -> Result<()> {
    check_pair(nu, mu)?;
    check_pair(mu_prime, mu)
}

/// `U`, `L` and `L_sq` with jackknife variances, from two leave-one-out
/// transport solves. Needs `n >= 2`. No intervals are attached; see
/// [`BoundSet::with_intervals`].
pub fn estimate_bounds(nu: &EmpiricalMeasure, mu: &EmpiricalMeasure, mu_prime: &EmpiricalMeasure) -> Result<BoundSet> {
    check_triple(nu, mu, mu_prime)?;
    let target = transport_costs(nu, mu)?;
    let baseline = transport_costs(mu_prime, mu)?;
    combine_bounds(&target, &[&baseline])
}

pub fn estimate_upper(nu: &EmpiricalMeasure, mu: &EmpiricalMeasure, mu_prime: &EmpiricalMeasure) -> Result<BoundEstimate> {
    Ok(estimate_bounds(nu, mu, mu_prime)?.upper)
}

pub fn estimate_lower(nu: &EmpiricalMeasure, mu: &EmpiricalMeasure, mu_prime: &EmpiricalMeasure) -> Result<BoundEstimate> {
    Ok(estimate_bounds(nu, mu, mu_prime)?.lower)
}

pub fn estimate_lower_squared(
    nu: &EmpiricalMeasure,
    mu: &EmpiricalMeasure,
    mu_prime: &EmpiricalMeasure,
) -> Result<BoundEstimate> {
    Ok(estimate_bounds(nu, mu, mu_prime)?.lower_squared)
}

/// Point values `(U, L)` only, without replicates. Valid for any `n >= 1`.
pub fn point_bounds(nu: &EmpiricalMeasure, mu: &EmpiricalMeasure, mu_prime: &EmpiricalMeasure) -> Result<(f64, f64)> {
    check_triple(nu, mu, mu_prime)?;
    let (target, _) = w2_squared(nu, mu)?;
    let (baseline, _) = w2_squared(mu_prime, mu)?;
    Ok((target - baseline, target.max(0.0).sqrt() - baseline.max(0.0).sqrt()))
}

/// Plug-in `K = 3 (E||X||²)^{1/2} + (E||Y||²)^{1/2}` with `X ~ μ`, `Y ~ ν`;
/// the expected upper bound is at most `K W2(μ, ν)`.
pub fn decay_constant(mu_samples: &EmpiricalMeasure, nu_samples: &EmpiricalMeasure) -> Result<f64> {
    Ok(3.0 * mu_samples.mean_squared_norm().sqrt() + nu_samples.mean_squared_norm().sqrt())
}
