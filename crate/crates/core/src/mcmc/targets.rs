//! Target densities: Gaussians with structured precision, and the
//! stochastic volatility posterior.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::gaussian::GaussianDist;

/// A log density known up to an additive constant.
pub trait Density: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    fn has_gradient(&self) -> bool {
        true
    }

    /// Returns `log π(x)` and writes `∇ log π(x)` into `grad`. Densities
    /// without a gradient leave `grad` untouched.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Initial-state generator for chains.
pub trait InitialSampler: Send + Sync {
    fn dim(&self) -> usize;

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]);
}

impl InitialSampler for GaussianDist {
    fn dim(&self) -> usize {
        GaussianDist::dim(self)
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        GaussianDist::sample_into(self, rng, out)
    }
}

/// Every chain starts at the same point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMass(pub Vec<f64>);

impl InitialSampler for PointMass {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn sample_into(&self, _rng: &mut dyn RngCore, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Symmetric precision with a tridiagonal band and optional cyclic corners.
#[derive(Debug, Clone, PartialEq)]
pub enum Precision {
    Dense(DMatrix<f64>),
    Banded { diag: Vec<f64>, off: Vec<f64>, corner: f64 },
}

impl Precision {
    pub fn dim(&self) -> usize {
        match self {
            Precision::Dense(m) => m.nrows(),
            Precision::Banded { diag, .. } => diag.len(),
        }
    }

    /// `out = Q x`.
    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Precision::Dense(m) => {
                let d = m.nrows();
                for i in 0..d {
                    out[i] = (0..d).map(|j| m[(i, j)] * x[j]).sum();
                }
            }
            Precision::Banded { diag, off, corner } => {
                let d = diag.len();
                for i in 0..d {
                    out[i] = diag[i] * x[i];
                }
                for i in 0..d.saturating_sub(1) {
                    out[i] += off[i] * x[i + 1];
                    out[i + 1] += off[i] * x[i];
                }
                if d > 2 && *corner != 0.0 {
                    out[0] += corner * x[d - 1];
                    out[d - 1] += corner * x[0];
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Precision::Dense(m) => m.clone(),
            Precision::Banded { diag, off, corner } => {
                let d = diag.len();
                let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(diag));
                for i in 0..d.saturating_sub(1) {
                    m[(i, i + 1)] = off[i];
                    m[(i + 1, i)] = off[i];
                }
                if d > 2 {
                    m[(0, d - 1)] += corner;
                    m[(d - 1, 0)] += corner;
                }
                m
            }
        }
    }
}

/// `log π(x) = -(x - m)ᵀ Q (x - m) / 2`.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    mean: Vec<f64>,
    precision: Precision,
}

impl GaussianDensity {
    pub fn new(mean: Vec<f64>, precision: Precision) -> Result<Self> {
        if mean.len() != precision.dim() {
            return Err(Error::ShapeMismatch("mean and precision dimensions differ".into()));
        }
        Ok(Self { mean, precision })
    }

    pub fn precision(&self) -> &Precision {
        &self.precision
    }
}

impl Density for GaussianDensity {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.log_density_and_grad(x, &mut g)
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.precision.mul_into(&centered, grad);
        let quad: f64 = centered.iter().zip(grad.iter()).map(|(c, g)| c * g).sum();
        for g in grad.iter_mut() {
            *g = -*g;
        }
        -0.5 * quad
    }
}

/// Stochastic volatility posterior over the latent log-variances given
/// observations `y`:
/// `-(Σ x_t + Σ y_t² e^{-x_t} / β² + Σ (φ x_t - x_{t+1})² / σ² + (1 - φ²) x_1² / σ²) / 2`.
#[derive(Debug, Clone)]
pub struct StochasticVolatility {
    params: SvParams,
    y_sq_scaled: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvParams {
    pub beta: f64,
    pub phi: f64,
    pub sigma: f64,
}

impl SvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(invalid(format!("|phi| must be below 1, got {}", self.phi)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.phi * self.phi)
    }
}

impl StochasticVolatility {
    pub fn new(params: SvParams, y: &[f64]) -> Result<Self> {
        params.validate()?;
        if y.is_empty() {
            return Err(invalid("need at least one observation"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation".into()));
        }
        let b2 = params.beta * params.beta;
        Ok(Self {
            params,
            y_sq_scaled: y.iter().map(|v| v * v / b2).collect(),
        })
    }

    pub fn params(&self) -> SvParams {
        self.params
    }
}

impl Density for StochasticVolatility {
    fn dim(&self) -> usize {
        self.y_sq_scaled.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.log_density_and_grad(x, &mut g)
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let SvParams { phi, sigma, .. } = self.params;
        let n = x.len();
        let s2 = sigma * sigma;
        // Shared between the density and its gradient.
        let obs: Vec<f64> = x.iter().zip(&self.y_sq_scaled).map(|(a, y)| y * (-a).exp()).collect();
        let innov: Vec<f64> = (0..n - 1).map(|t| phi * x[t] - x[t + 1]).collect();

        let sum_x: f64 = x.iter().sum();
        let sum_obs: f64 = obs.iter().sum();
        let sum_innov: f64 = innov.iter().map(|e| e * e).sum();
        let log_p = -0.5 * (sum_x + sum_obs + sum_innov / s2 + (1.0 - phi * phi) * x[0] * x[0] / s2);

        for t in 0..n {
            grad[t] = 0.5 * obs[t] - 0.5;
        }
        for t in 0..n - 1 {
            grad[t] -= phi * innov[t] / s2;
            grad[t + 1] += innov[t] / s2;
        }
        grad[0] -= (1.0 - phi * phi) * x[0] / s2;
        log_p
    }
}

/// Prior of the latent AR(1) log-variance process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvPrior {
    pub params: SvParams,
    pub len: usize,
}

impl InitialSampler for SvPrior {
    fn dim(&self) -> usize {
        self.len
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        let SvParams { phi, sigma, .. } = self.params;
        let z: f64 = rng.sample(StandardNormal);
        out[0] = z * self.params.stationary_variance().sqrt();
        for t in 1..self.len {
            let e: f64 = rng.sample(StandardNormal);
            out[t] = phi * out[t - 1] + sigma * e;
        }
    }
}

/// Latent path and observations drawn from the generative model.
pub fn simulate_stochastic_volatility(params: SvParams, len: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    if len == 0 {
        return Err(invalid("series length must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; len];
    SvPrior { params, len }.sample_into(&mut rng, &mut x);
    let y = x
        .iter()
        .map(|a| {
            let e: f64 = rng.sample(StandardNormal);
            params.beta * e * (a / 2.0).exp()
        })
        .collect();
    Ok((x, y))
}

/// A target distribution. Gaussian targets also carry their closed form,
/// which enables exact Gibbs sweeps and exact marginal trajectories.
#[derive(Clone)]
pub struct Target {
    name: String,
    density: Arc<dyn Density>,
    gaussian: Option<GaussianDist>,
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Target")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("gaussian", &self.gaussian.is_some())
            .finish()
    }
}

impl Target {
    pub fn from_density(name: impl Into<String>, density: Arc<dyn Density>) -> Self {
        Self {
            name: name.into(),
            density,
            gaussian: None,
        }
    }

    /// A Gaussian target evaluated through a dense precision.
    pub fn gaussian(dist: GaussianDist) -> Result<Self> {
        let density = GaussianDensity::new(dist.mean().as_slice().to_vec(), Precision::Dense(dist.precision()))?;
        Ok(Self {
            name: "gaussian".into(),
            density: Arc::new(density),
            gaussian: Some(dist),
        })
    }

    fn gaussian_with_precision(name: &str, mean: Vec<f64>, precision: Precision, dist: GaussianDist) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            density: Arc::new(GaussianDensity::new(mean, precision)?),
            gaussian: Some(dist),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    pub fn density(&self) -> &Arc<dyn Density> {
        &self.density
    }

    pub fn has_gradient(&self) -> bool {
        self.density.has_gradient()
    }

    /// The closed form of a Gaussian target.
    pub fn gaussian_dist(&self) -> Option<&GaussianDist> {
        self.gaussian.as_ref()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.density.log_density(x)
    }

    pub fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.density.log_density_and_grad(x, grad)
    }
}

/// Stationary law of `X_{k+1} = ρ X_k + ε_k` on a cycle of length `d`
/// (`X_{d+1} = X_1`). The precision is `(1 + ρ²) I - ρ (P + Pᵀ)` with `P` the
/// cyclic shift.
pub fn target_ar1_circulant(d: usize, rho: f64) -> Result<Target> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if !(rho.abs() < 1.0) {
        return Err(invalid(format!("|rho| must be below 1, got {rho}")));
    }
    let precision = match d {
        1 => Precision::Banded {
            diag: vec![(1.0 - rho) * (1.0 - rho)],
            off: vec![],
            corner: 0.0,
        },
        2 => Precision::Banded {
            diag: vec![1.0 + rho * rho; 2],
            off: vec![-2.0 * rho],
            corner: 0.0,
        },
        _ => Precision::Banded {
            diag: vec![1.0 + rho * rho; d],
            off: vec![-rho; d - 1],
            corner: -rho,
        },
    };
    let cov = precision
        .to_dense()
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite("circulant precision".into()))?;
    let dist = GaussianDist::centered((&cov + cov.transpose()) * 0.5)?;
    Target::gaussian_with_precision("ar1_circulant", vec![0.0; d], precision, dist)
}

/// `N(0, Σ)` with `Σ_ij = 0.5^{|i-j|}`; its precision is tridiagonal.
pub fn target_ar1_covariance(d: usize) -> Result<Target> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let rho: f64 = 0.5;
    let scale = 1.0 / (1.0 - rho * rho);
    let mut diag = vec![(1.0 + rho * rho) * scale; d];
    diag[0] = scale;
    diag[d - 1] = scale;
    if d == 1 {
        diag[0] = 1.0;
    }
    let precision = Precision::Banded {
        diag,
        off: vec![-rho * scale; d - 1],
        corner: 0.0,
    };
    let cov = DMatrix::from_fn(d, d, |i, j| rho.powi((i as i32 - j as i32).abs()));
    let dist = GaussianDist::centered(cov)?;
    Target::gaussian_with_precision("ar1_covariance", vec![0.0; d], precision, dist)
}

/// Stochastic volatility posterior given observed `y`.
pub fn target_stochastic_volatility(params: SvParams, y: &[f64]) -> Result<Target> {
    Ok(Target::from_density(
        "stochastic_volatility",
        Arc::new(StochasticVolatility::new(params, y)?),
    ))
}

/// Stochastic volatility posterior with observations simulated from the model.
pub fn target_stochastic_volatility_simulated(params: SvParams, len: usize, seed: u64) -> Result<Target> {
    let (_, y) = simulate_stochastic_volatility(params, len, seed)?;
    target_stochastic_volatility(params, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circulant_rho_zero_is_identity() {
        let t = target_ar1_circulant(6, 0.0).unwrap();
        let cov = t.gaussian_dist().unwrap().cov();
        assert!((cov - DMatrix::<f64>::identity(6, 6)).abs().max() < 1e-14);
    }

    #[test]
    fn circulant_small_dimensions() {
        let rho = 0.3;
        let t = target_ar1_circulant(1, rho).unwrap();
        let v = t.gaussian_dist().unwrap().cov()[(0, 0)];
        assert!((v - 1.0 / ((1.0 - rho) * (1.0 - rho))).abs() < 1e-12);
        assert!(target_ar1_circulant(2, rho).is_ok());
        assert!(target_ar1_circulant(5, 1.0).is_err());
        assert!(target_ar1_circulant(0, 0.5).is_err());
    }

    #[test]
    fn covariance_target_precision_is_inverse() {
        for d in [1, 2, 3, 10] {
            let t = target_ar1_covariance(d).unwrap();
            let dist = t.gaussian_dist().unwrap();
            let mut q = DMatrix::zeros(d, d);
            for j in 0..d {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                let mut g = vec![0.0; d];
                t.log_density_and_grad(&e, &mut g);
                for i in 0..d {
                    q[(i, j)] = -g[i];
                }
            }
            let prod = q * dist.cov();
            assert!((prod - DMatrix::<f64>::identity(d, d)).abs().max() < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn gaussian_log_density_values() {
        let t = target_ar1_covariance(1).unwrap();
        assert!((t.log_density(&[2.0]) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn sv_rejects_bad_parameters() {
        let y = [0.1, -0.2];
        let ok = SvParams { beta: 0.65, phi: 0.98, sigma: 0.15 };
        assert!(target_stochastic_volatility(ok, &y).is_ok());
        assert!(target_stochastic_volatility(SvParams { phi: 1.0, ..ok }, &y).is_err());
        assert!(target_stochastic_volatility(SvParams { beta: 0.0, ..ok }, &y).is_err());
        assert!(target_stochastic_volatility(SvParams { sigma: -1.0, ..ok }, &y).is_err());
        assert!(target_stochastic_volatility(ok, &[]).is_err());
    }

    #[test]
    fn sv_simulation_is_deterministic() {
        let p = SvParams { beta: 0.65, phi: 0.98, sigma: 0.15 };
        let a = simulate_stochastic_volatility(p, 50, 3).unwrap();
        let b = simulate_stochastic_volatility(p, 50, 3).unwrap();
        assert_eq!(a, b);
    }
}
