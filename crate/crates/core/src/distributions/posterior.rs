//! Finite-sample uncertainty of a variance and of a correlation coefficient
//! under Gaussian returns.

use statrs::function::gamma::ln_gamma;

use super::hyp2f1::hyp2f1;
use crate::error::{Error, Result};

fn check_sample_size(n: u32, min: u32) -> Result<()> {
    if n < min {
        return Err(Error::Domain(format!("sample size must be >= {min}, got {n}")));
    }
    Ok(())
}

/// Density of the population variance `σ²` given a sample variance `s²` from
/// `n` observations: scaled inverse chi-squared with `ν = n − 1` and scale `s²`,
///
/// `p(σ²) = (νs²/2)^{ν/2} / Γ(ν/2) · (σ²)^{−(n+1)/2} · exp(−νs²/(2σ²))`.
pub fn scaled_inv_chi2_pdf(sigma2: f64, n: u32, s2: f64) -> Result<f64> {
    check_sample_size(n, 2)?;
    if !(sigma2 > 0.0) || !(s2 > 0.0) {
        return Err(Error::Domain(format!(
            "variances must be positive (sigma2 = {sigma2}, s2 = {s2})"
        )));
    }
    let nu = f64::from(n - 1);
    let half = 0.5 * nu;
    let log_norm = half * (half * s2).ln() - ln_gamma(half);
    let log_kernel = -(half + 1.0) * sigma2.ln() - half * s2 / sigma2;
    Ok((log_norm + log_kernel).exp())
}

/// `E[σ²] = s² (n−1)/(n−3)`, finite for `n > 3`.
pub fn scaled_inv_chi2_mean(n: u32, s2: f64) -> Result<f64> {
    check_sample_size(n, 4)?;
    let n = f64::from(n);
    Ok(s2 * (n - 1.0) / (n - 3.0))
}

/// `Var[σ²] = s⁴ · 2(n−1)² / ((n−3)²(n−5))`, finite for `n > 5`.
pub fn scaled_inv_chi2_variance(n: u32, s2: f64) -> Result<f64> {
    check_sample_size(n, 6)?;
    let n = f64::from(n);
    Ok(s2 * s2 * 2.0 * (n - 1.0).powi(2) / ((n - 3.0).powi(2) * (n - 5.0)))
}

/// Density of the population volatility `σ` implied by [`scaled_inv_chi2_pdf`]
/// (change of variables `σ² → σ`).
pub fn volatility_pdf(sigma: f64, n: u32, s: f64) -> Result<f64> {
    Ok(2.0 * sigma * scaled_inv_chi2_pdf(sigma * sigma, n, s * s)?)
}

/// Conditional density of the population correlation `ρ` given a sample
/// correlation `r` from `n` bivariate Gaussian observations (`ν = n − 1`):
///
/// `Γ(ν+1)/(√(2π) Γ(ν+½)) (1−r²)^{(ν−1)/2} (1−ρ²)^{(ν−2)/2} (1−rρ)^{(1−2ν)/2}
///  ₂F₁(3/2, −1/2; ν+½; (1+rρ)/2)`.
pub fn conditional_correlation_pdf(rho: f64, r: f64, n: u32) -> Result<f64> {
    check_sample_size(n, 3)?;
    let open = |x: f64| x > -1.0 && x < 1.0;
    if !open(rho) || !open(r) {
        return Err(Error::Domain(format!(
            "correlations must lie in (-1, 1) (rho = {rho}, r = {r})"
        )));
    }
    let nu = f64::from(n - 1);
    let log_norm =
        ln_gamma(nu + 1.0) - 0.5 * (2.0 * std::f64::consts::PI).ln() - ln_gamma(nu + 0.5);
    let rr = r * rho;
    let log_body = 0.5 * (nu - 1.0) * (1.0 - r * r).ln()
        + 0.5 * (nu - 2.0) * (1.0 - rho * rho).ln()
        + 0.5 * (1.0 - 2.0 * nu) * (1.0 - rr).ln();
    let f = hyp2f1(1.5, -0.5, nu + 0.5, 0.5 * (1.0 + rr))?;
    Ok((log_norm + log_body).exp() * f)
}
