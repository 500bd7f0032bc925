//! Closed-form Gaussian transport, overdispersion checks, and the exact
//! marginal dynamics of Gibbs and ULA chains on Gaussian targets.
//!
//! For Gaussians, ν is contractively transported to μ exactly when
//! `Σ_ν - Σ_μ` is positive semi-definite. A chain whose one-step map is
//! affine with update matrix `A` has Gaussian marginals obeying
//! `μ_t - μ_∞ = Aᵗ (μ_0 - μ_∞)` and `Σ_t - Σ_∞ = Aᵗ (Σ_0 - Σ_∞) (Aᵗ)ᵀ`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_CLAMP: f64 = 1e-10;
const COT_TOL: f64 = 1e-10;
const QUANTILE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl PartialEq for GaussianDist {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl GaussianDist {
    /// Validates symmetry (relative 1e-10) and strict positive definiteness.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(invalid("Gaussian dimension must be at least 1"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::ShapeMismatch(format!(
                "covariance is {}x{}, mean has length {d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Gaussian parameters".into()));
        }
        let asym = max_abs(&(&cov - cov.transpose()));
        if asym > SYMMETRY_TOL * max_abs(&cov) {
            return Err(invalid(format!("covariance is not symmetric (max asymmetry {asym:e})")));
        }
        let cov = symmetrized(&cov);
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("covariance".into()))?
            .unpack();
        if chol.diagonal().iter().any(|&x| !(x > 0.0)) {
            return Err(Error::NotPositiveDefinite("covariance".into()));
        }
        Ok(Self { mean, cov, chol })
    }

    pub fn standard(d: usize) -> Result<Self> {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d))
    }

    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d) * variance)
    }

    pub fn centered(cov: DMatrix<f64>) -> Result<Self> {
        Self::new(DVector::zeros(cov.nrows()), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Same mean, covariance multiplied by `factor`.
    pub fn with_scaled_cov(&self, factor: f64) -> Result<Self> {
        Self::new(self.mean.clone(), &self.cov * factor)
    }

    pub fn precision(&self) -> DMatrix<f64> {
        Cholesky::new(self.cov.clone())
            .expect("covariance validated at construction")
            .inverse()
    }

    /// Writes one draw into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..d {
            let mut acc = self.mean[i];
            for k in 0..=i {
                acc += self.chol[(i, k)] * z[k];
            }
            out[i] = acc;
        }
    }
}

fn clamped_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, Dyn>> {
    let mut eig = SymmetricEigen::new(symmetrized(m));
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    for lambda in eig.eigenvalues.iter_mut() {
        if *lambda < 0.0 {
            if *lambda < -PSD_CLAMP * scale {
                return Err(Error::NotPositiveDefinite(format!("{what}: eigenvalue {lambda:e}")));
            }
            *lambda = 0.0;
        }
    }
    Ok(eig)
}

/// Principal square root of a symmetric positive semi-definite matrix.
/// Eigenvalues in `[-1e-10, 0)` (relative to the spectrum) are clamped to 0.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = clamped_eigen(m, "square root")?;
    let roots = eig.eigenvalues.map(f64::sqrt);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

fn check_dims(a: &GaussianDist, b: &GaussianDist) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!("dimensions {} and {} differ", a.dim(), b.dim())));
    }
    Ok(())
}

/// `||μ_a - μ_b||² + tr Σ_a + tr Σ_b - 2 tr (Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2}`.
pub fn w2_squared_gaussian(a: &GaussianDist, b: &GaussianDist) -> Result<f64> {
    check_dims(a, b)?;
    let root_a = sym_sqrt(&a.cov)?;
    let inner = &root_a * &b.cov * &root_a;
    let cross: f64 = clamped_eigen(&inner, "cross term")?.eigenvalues.iter().map(|l| l.sqrt()).sum();
    let mean_term = (&a.mean - &b.mean).norm_squared();
    Ok((mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross).max(0.0))
}

/// `Σ_ν ⪰ Σ_μ`, i.e. ν is contractively transported to μ.
pub fn check_cot_gaussian(nu: &GaussianDist, mu: &GaussianDist) -> Result<bool> {
    check_dims(nu, mu)?;
    let diff = symmetrized(&(&nu.cov - &mu.cov));
    let smallest = SymmetricEigen::new(diff).eigenvalues.min();
    let scale = SymmetricEigen::new(nu.cov.clone()).eigenvalues.max();
    Ok(smallest >= -COT_TOL * scale)
}

/// One-dimensional dispersive-order check on quantiles taken at a shared
/// probability grid: every gap of `nu` is at least the matching gap of `mu`.
pub fn check_cot_1d_quantiles(nu_quantiles: &[f64], mu_quantiles: &[f64]) -> Result<bool> {
    if nu_quantiles.len() != mu_quantiles.len() {
        return Err(Error::ShapeMismatch("quantile vectors differ in length".into()));
    }
    if nu_quantiles.len() < 2 {
        return Err(invalid("need at least two quantiles"));
    }
    for q in [nu_quantiles, mu_quantiles] {
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("quantile".into()));
        }
        if q.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("quantiles must be sorted ascending"));
        }
    }
    Ok(nu_quantiles
        .windows(2)
        .zip(mu_quantiles.windows(2))
        .all(|(a, b)| a[1] - a[0] >= b[1] - b[0] - QUANTILE_TOL))
}

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().fold(0.0, |r, z| r.max(z.norm()))
}

/// `M = I - h² Σ⁻¹ / 2`, the linear part of ULA on `N(μ, Σ)`.
pub fn ula_update_matrix(target: &GaussianDist, h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("step size must be positive, got {h}")));
    }
    let eig = SymmetricEigen::new(target.cov.clone());
    let diag = eig.eigenvalues.map(|l| 1.0 - h * h / (2.0 * l));
    let rho = diag.iter().fold(0.0f64, |r, x| r.max(x.abs()));
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&diag) * eig.eigenvectors.transpose())
}

/// Stationary law of ULA on `N(μ, Σ)`: `N(μ, (I - h² Σ⁻¹ / 4)⁻¹ Σ)`.
pub fn ula_stationary(target: &GaussianDist, h: f64) -> Result<GaussianDist> {
    ula_update_matrix(target, h)?;
    let eig = SymmetricEigen::new(target.cov.clone());
    let diag = eig.eigenvalues.map(|l| l / (1.0 - h * h / (4.0 * l)));
    let cov = &eig.eigenvectors * DMatrix::from_diagonal(&diag) * eig.eigenvectors.transpose();
    GaussianDist::new(target.mean.clone(), symmetrized(&cov))
}

/// One sweep of a deterministic-scan blocked Gibbs sampler on a Gaussian with
/// the given precision maps `x` to `B x + b + noise`. Blocks are 0-based
/// coordinate sets, updated in the given order.
pub fn gibbs_update_matrix(precision: &DMatrix<f64>, blocks: &[Vec<usize>]) -> Result<DMatrix<f64>> {
    let d = precision.nrows();
    if precision.ncols() != d || d == 0 {
        return Err(Error::ShapeMismatch("precision must be square and nonempty".into()));
    }
    let mut seen = vec![false; d];
    for block in blocks {
        if block.is_empty() {
            return Err(invalid("Gibbs blocks must be nonempty"));
        }
        for &k in block {
            if k >= d || seen[k] {
                return Err(invalid(format!("blocks do not partition 0..{d} (index {k})")));
            }
            seen[k] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(invalid(format!("blocks do not cover 0..{d}")));
    }

    let mut b = DMatrix::<f64>::identity(d, d);
    for block in blocks {
        let rest: Vec<usize> = (0..d).filter(|k| !block.contains(k)).collect();
        let q_bb = precision.select_rows(block).select_columns(block);
        let q_br = precision.select_rows(block).select_columns(&rest);
        let chol = Cholesky::new(q_bb).ok_or_else(|| Error::NotPositiveDefinite("precision block".into()))?;
        // Conditional mean of the block: -Q_bb⁻¹ Q_{b,rest} x_rest.
        let coef = -chol.solve(&q_br);
        let new_rows = &coef * b.select_rows(&rest);
        for (r, &k) in block.iter().enumerate() {
            b.set_row(k, &new_rows.row(r));
        }
    }
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsKind {
    GibbsDeterministicScan,
    Ula,
}

/// Affine-Gaussian chain dynamics with cached squarings `A, A², A⁴, ...`.
#[derive(Debug, Clone)]
pub struct GaussianChainDynamics {
    kind: DynamicsKind,
    update: DMatrix<f64>,
    stationary: GaussianDist,
    spectral_radius: f64,
    squarings: Vec<DMatrix<f64>>,
}

impl GaussianChainDynamics {
    pub fn new(kind: DynamicsKind, update: DMatrix<f64>, stationary: GaussianDist) -> Result<Self> {
        let d = stationary.dim();
        if update.nrows() != d || update.ncols() != d {
            return Err(Error::ShapeMismatch("update matrix does not match the stationary law".into()));
        }
        let rho = spectral_radius(&update);
        if !(rho < 1.0) {
            return Err(Error::Unstable(rho));
        }
        let mut squarings = vec![update.clone()];
        while squarings.len() < 64 {
            let last = squarings.last().unwrap();
            if max_abs(last) < 1e-300 {
                break;
            }
            squarings.push(last * last);
        }
        Ok(Self {
            kind,
            update,
            stationary,
            spectral_radius: rho,
            squarings,
        })
    }

    /// Deterministic-scan Gibbs on `target`; the stationary law is the target.
    pub fn gibbs(target: &GaussianDist, blocks: &[Vec<usize>]) -> Result<Self> {
        let b = gibbs_update_matrix(&target.precision(), blocks)?;
        Self::new(DynamicsKind::GibbsDeterministicScan, b, target.clone())
    }

    /// Single-site Gibbs, coordinates updated in increasing order.
    pub fn gibbs_single_site(target: &GaussianDist) -> Result<Self> {
        let blocks: Vec<Vec<usize>> = (0..target.dim()).map(|k| vec![k]).collect();
        Self::gibbs(target, &blocks)
    }

    /// ULA with step `h`; the stationary law is the biased `N(μ, Σ_∞)`.
    pub fn ula(target: &GaussianDist, h: f64) -> Result<Self> {
        let m = ula_update_matrix(target, h)?;
        Self::new(DynamicsKind::Ula, m, ula_stationary(target, h)?)
    }

    pub fn kind(&self) -> DynamicsKind {
        self.kind
    }

    pub fn update_matrix(&self) -> &DMatrix<f64> {
        &self.update
    }

    pub fn stationary(&self) -> &GaussianDist {
        &self.stationary
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    /// `Aᵗ` from the cached squarings, `O(log t)` products.
    pub fn power(&self, t: usize) -> DMatrix<f64> {
        let d = self.update.nrows();
        let mut acc = DMatrix::<f64>::identity(d, d);
        let mut rest = t;
        let mut bit = 0;
        while rest > 0 {
            if rest & 1 == 1 {
                match self.squarings.get(bit) {
                    Some(p) => acc = &acc * p,
                    None => return DMatrix::zeros(d, d),
                }
            }
            rest >>= 1;
            bit += 1;
        }
        acc
    }

    /// One application of the marginal recurrence.
    pub fn step(&self, current: &GaussianDist) -> Result<GaussianDist> {
        self.propagate(current, &self.update)
    }

    fn propagate(&self, pi0: &GaussianDist, a: &DMatrix<f64>) -> Result<GaussianDist> {
        check_dims(pi0, &self.stationary)?;
        let s = &self.stationary;
        let mean = &s.mean + a * (&pi0.mean - &s.mean);
        let cov = &s.cov + a * (&pi0.cov - &s.cov) * a.transpose();
        GaussianDist::new(mean, symmetrized(&cov))
    }

    /// Marginal law after `t` iterations from `pi0`.
    pub fn marginal_at(&self, pi0: &GaussianDist, t: usize) -> Result<GaussianDist> {
        if t == 0 {
            check_dims(pi0, &self.stationary)?;
            return Ok(pi0.clone());
        }
        self.propagate(pi0, &self.power(t))
    }
}

/// Overdispersion of each marginal `π_t` relative to the stationary law, for
/// `t = 0..=horizon`. For these dynamics every entry equals the first.
pub fn cot_preservation_check(
    dynamics: &GaussianChainDynamics,
    pi0: &GaussianDist,
    horizon: usize,
) -> Result<Vec<bool>> {
    (0..=horizon)
        .map(|t| check_cot_gaussian(&dynamics.marginal_at(pi0, t)?, dynamics.stationary()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> GaussianDist {
        GaussianDist::centered(DMatrix::from_diagonal(&DVector::from_row_slice(values))).unwrap()
    }

    #[test]
    fn rejects_invalid_covariances() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(GaussianDist::centered(asym).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(GaussianDist::centered(indefinite), Err(Error::NotPositiveDefinite(_))));
        assert!(GaussianDist::new(DVector::zeros(3), DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn w2_examples() {
        let a = diag(&[1.0, 1.0]);
        assert_eq!(w2_squared_gaussian(&a, &a).unwrap(), 0.0);
        let b = diag(&[2.0, 0.25]);
        let expected = 0.25 + (2f64.sqrt() - 1.0).powi(2);
        assert!((w2_squared_gaussian(&a, &b).unwrap() - expected).abs() < 1e-12);

        let sigma = 1.7f64;
        let d = 5;
        let iso = GaussianDist::isotropic(d, sigma * sigma).unwrap();
        let got = w2_squared_gaussian(&GaussianDist::standard(d).unwrap(), &iso).unwrap();
        assert!((got - d as f64 * (sigma - 1.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn w2_includes_mean_shift() {
        let a = GaussianDist::new(DVector::from_vec(vec![1.0, 2.0]), DMatrix::identity(2, 2)).unwrap();
        let b = GaussianDist::standard(2).unwrap();
        assert!((w2_squared_gaussian(&a, &b).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn loewner_checks() {
        let id = diag(&[1.0, 1.0]);
        assert!(check_cot_gaussian(&diag(&[2.0, 2.0]), &id).unwrap());
        assert!(!check_cot_gaussian(&diag(&[2.0, 0.25]), &id).unwrap());
        assert!(!check_cot_gaussian(&id, &diag(&[2.0, 0.25])).unwrap());
        assert!(check_cot_gaussian(&id, &id).unwrap());
        assert!(check_cot_gaussian(&id, &GaussianDist::standard(3).unwrap()).is_err());
    }

    #[test]
    fn quantile_checks() {
        let mu = [-1.0, -0.2, 0.0, 0.3, 1.5];
        let nu: Vec<f64> = mu.iter().map(|x| 2.0 * x).collect();
        assert!(check_cot_1d_quantiles(&nu, &mu).unwrap());
        assert!(check_cot_1d_quantiles(&mu, &mu).unwrap());
        assert!(!check_cot_1d_quantiles(&mu, &nu).unwrap());
        assert!(check_cot_1d_quantiles(&[1.0, 0.0], &[0.0, 1.0]).is_err());
        assert!(check_cot_1d_quantiles(&[0.0], &[0.0]).is_err());
        assert!(check_cot_1d_quantiles(&[0.0, 1.0], &[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn ula_stationary_identity() {
        let h = 0.3;
        let target = GaussianDist::standard(3).unwrap();
        let s = ula_stationary(&target, h).unwrap();
        let expected = 1.0 / (1.0 - h * h / 4.0);
        for i in 0..3 {
            assert!((s.cov()[(i, i)] - expected).abs() < 1e-14);
        }
        assert!(matches!(ula_stationary(&target, 2.5), Err(Error::Unstable(_))));
        assert!(ula_stationary(&target, -1.0).is_err());
    }

    #[test]
    fn gibbs_trivial_cases() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let b = gibbs_update_matrix(&q, &[vec![0], vec![1], vec![2]]).unwrap();
        assert_eq!(b, DMatrix::zeros(3, 3));
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, 1.0]);
        assert_eq!(gibbs_update_matrix(&q, &[vec![0, 1]]).unwrap(), DMatrix::zeros(2, 2));
        assert!(gibbs_update_matrix(&q, &[vec![0]]).is_err());
        assert!(gibbs_update_matrix(&q, &[vec![0], vec![0, 1]]).is_err());
    }

    #[test]
    fn gibbs_two_by_two_by_hand() {
        let (s11, s12, s22) = (2.0, 0.9, 1.5);
        let sigma = DMatrix::from_row_slice(2, 2, &[s11, s12, s12, s22]);
        let target = GaussianDist::centered(sigma).unwrap();
        let b = gibbs_update_matrix(&target.precision(), &[vec![0], vec![1]]).unwrap();
        // x1 <- (s12/s22) x2, then x2 <- (s12/s11) x1.
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, s12 / s22, 0.0, s12 * s12 / (s11 * s22)]);
        assert!((b - expected).abs().max() < 1e-14);
    }

    #[test]
    fn marginal_small_times() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        let target = GaussianDist::centered(sigma).unwrap();
        let dynamics = GaussianChainDynamics::gibbs_single_site(&target).unwrap();
        let pi0 = GaussianDist::new(DVector::from_vec(vec![3.0, -1.0]), DMatrix::identity(2, 2) * 4.0).unwrap();
        assert_eq!(dynamics.marginal_at(&pi0, 0).unwrap(), pi0);
        let one = dynamics.marginal_at(&pi0, 1).unwrap();
        let direct = dynamics.step(&pi0).unwrap();
        assert!((one.cov() - direct.cov()).abs().max() < 1e-14);
        assert!((one.mean() - direct.mean()).abs().max() < 1e-14);
    }

    #[test]
    fn unstable_dynamics_rejected() {
        let target = GaussianDist::standard(2).unwrap();
        let a = DMatrix::identity(2, 2) * 1.01;
        assert!(matches!(
            GaussianChainDynamics::new(DynamicsKind::Ula, a, target),
            Err(Error::Unstable(_))
        ));
    }
}
