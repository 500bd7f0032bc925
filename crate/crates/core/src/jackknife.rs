//! Jackknife variance from leave-one-out replicates, and the confidence
//! intervals built on it.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JackknifeResult {
    pub variance: f64,
    pub n: usize,
    pub mean_loo: f64,
}

impl JackknifeResult {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// `((n - 1) / n) * sum_i (F_i - mean(F))^2`.
pub fn jackknife_variance(loo_values: &[f64]) -> Result<JackknifeResult> {
    let n = loo_values.len();
    if n < 2 {
        return Err(invalid("jackknife needs at least two replicates"));
    }
    if let Some(k) = loo_values.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("leave-one-out replicate {k}")));
    }
    let nf = n as f64;
    let mean = loo_values.iter().sum::<f64>() / nf;
    let ss: f64 = loo_values.iter().map(|f| (f - mean) * (f - mean)).sum();
    Ok(JackknifeResult {
        variance: (nf - 1.0) / nf * ss,
        n,
        mean_loo: mean,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Two-sided normal interval `estimate -/+ sd * z_{1 - alpha/2}`.
pub fn gaussian_ci(estimate: f64, jk: &JackknifeResult, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let half = jk.std_dev() * normal_quantile(1.0 - alpha / 2.0);
    Ok((estimate - half, estimate + half))
}

/// Chebyshev interval `estimate -/+ sd / sqrt(alpha)`; coverage at least `1 - alpha`.
pub fn chebyshev_ci(estimate: f64, jk: &JackknifeResult, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let half = jk.std_dev() / alpha.sqrt();
    Ok((estimate - half, estimate + half))
}

pub fn signed_square(x: f64) -> f64 {
    x.signum() * x * x
}

/// Maps an interval for `E L` to the signed-square scale. The map is
/// monotone so ordering and coverage carry over.
pub fn signed_square_ci(_l_estimate: f64, l_ci: (f64, f64)) -> (f64, f64) {
    let (lo, hi) = l_ci;
    let (a, b) = (signed_square(lo), signed_square(hi));
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Inverse standard normal CDF, Acklam's rational approximation
/// (relative error below 1.2e-9).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239e0,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838e0,
        -2.549732539343734e0,
        4.374664141464968e0,
        2.938163982698783e0,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996e0,
        3.754408661907416e0,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
