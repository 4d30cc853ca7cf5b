//! One risky asset with shifted-gamma variance noise and Gaussian noise on
//! the expected return.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::types::LogValue;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnivariateProblem {
    pub mu0: f64,
    pub sigma0_sq: f64,
    pub sigma_sq: f64,
    pub sigma_min_sq: f64,
    pub alpha: f64,
    pub a: f64,
}

impl UnivariateProblem {
    pub fn new(
        mu0: f64,
        sigma0_sq: f64,
        sigma_sq: f64,
        sigma_min_sq: f64,
        alpha: f64,
        a: f64,
    ) -> Result<Self> {
        let p = Self {
            mu0,
            sigma0_sq,
            sigma_sq,
            sigma_min_sq,
            alpha,
            a,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu0.is_finite() {
            return Err(invalid("mu0", "must be finite"));
        }
        if !(self.sigma0_sq >= 0.0) || !self.sigma0_sq.is_finite() {
            return Err(invalid("sigma0_sq", "must be finite and nonnegative"));
        }
        if !(self.sigma_min_sq >= 0.0) || !self.sigma_min_sq.is_finite() {
            return Err(invalid("sigma_min_sq", "must be finite and nonnegative"));
        }
        for (name, v) in [("sigma_sq", self.sigma_sq), ("alpha", self.alpha), ("a", self.a)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, "must be finite and strictly positive"));
            }
        }
        Ok(())
    }

    /// `σ²_min + σ₀²`, the part of the variance that is not noisy.
    fn fixed_var(&self) -> f64 {
        self.sigma_min_sq + self.sigma0_sq
    }

    /// `σ²_min + σ₀² + σ²`
    fn total_var(&self) -> f64 {
        self.fixed_var() + self.sigma_sq
    }

    /// Weights with `|w| < w_max` keep the marginalized utility finite.
    pub fn max_weight(&self) -> f64 {
        self.alpha.sqrt() / (self.a * self.sigma_sq.sqrt())
    }

    /// Coefficients `[c3, c2, c1, c0]` of the first-order condition.
    pub fn cubic_coefficients(&self) -> [f64; 4] {
        let (a, s2) = (self.a, self.sigma_sq);
        [
            a.powi(3) * self.fixed_var() * s2,
            -a * a * self.mu0 * s2,
            -a * self.alpha * self.total_var(),
            self.mu0 * self.alpha,
        ]
    }

    /// `|P(w)| / Σ|c_i||w|^i`
    pub fn scaled_residual(&self, w: f64) -> f64 {
        let c = self.cubic_coefficients();
        let value = ((c[0] * w + c[1]) * w + c[2]) * w + c[3];
        let scale = ((c[0].abs() * w.abs() + c[1].abs()) * w.abs() + c[2].abs()) * w.abs() + c[3].abs();
        if scale == 0.0 {
            0.0
        } else {
            value.abs() / scale
        }
    }
}

/// Log-magnitude of the marginalized expected utility, which is
/// `−exp(½a²(σ²_min+σ₀²)w² − aμ₀w)·(1 − (a²/α)w²σ²)^(−α/2)`.
pub fn marginal_expected_utility(p: &UnivariateProblem, w: f64) -> Result<LogValue> {
    log_magnitude(p, w).map(LogValue::negative)
}

fn log_magnitude(p: &UnivariateProblem, w: f64) -> Result<f64> {
    let x = p.a * p.a / p.alpha * w * w * p.sigma_sq;
    if !(x < 1.0) {
        return Err(Error::Domain(format!(
            "weight {w} outside the admissible region |w| < {}",
            p.max_weight()
        )));
    }
    Ok(0.5 * p.a * p.a * p.fixed_var() * w * w - p.a * p.mu0 * w - 0.5 * p.alpha * (-x).ln_1p())
}

/// Optimal weight: the admissible root of the first-order cubic with the
/// best objective.
pub fn solve_cubic(p: &UnivariateProblem) -> Result<f64> {
    p.validate()?;
    if p.mu0 == 0.0 {
        return Ok(0.0);
    }
    let c = p.cubic_coefficients();
    let rest = c[1].abs().max(c[2].abs()).max(c[3].abs());
    let roots = if c[0].abs() < 1e-14 * rest {
        quadratic_roots(c[1], c[2], c[3])
    } else {
        cubic_roots(c[0], c[1], c[2], c[3])
    };
    let w_max = p.max_weight();
    let admissible: Vec<(f64, f64)> = roots
        .iter()
        .filter(|w| w.abs() < w_max)
        .filter_map(|&w| log_magnitude(p, w).ok().map(|l| (w, l)))
        .collect();
    if admissible.len() > 1 {
        log::debug!("{} admissible roots for {p:?}: {admissible:?}", admissible.len());
    }
    match admissible
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
    {
        Some((w, _)) => Ok(w),
        None => {
            log::error!("no admissible root: problem {p:?}, coefficients {c:?}, roots {roots:?}");
            Err(Error::Domain(format!(
                "no real root of the first-order cubic lies in |w| < {w_max}"
            )))
        }
    }
}

/// Real roots of `c2 x² + c1 x + c0`, or of the linear equation when `c2 = 0`.
fn quadratic_roots(c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    if c2 == 0.0 {
        return if c1 == 0.0 { vec![] } else { vec![-c0 / c1] };
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return vec![];
    }
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / c2, c0 / q]
}

/// Real roots of a cubic with `c3 ≠ 0`, each polished by Newton steps.
fn cubic_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let (b, c, d) = (c2 / c3, c1 / c3, c0 / c3);
    let p = c - b * b / 3.0;
    let q = 2.0 * b.powi(3) / 27.0 - b * c / 3.0 + d;
    let disc = 0.25 * q * q + (p / 3.0).powi(3);
    let shift = -b / 3.0;
    let raw: Vec<f64> = if disc > 0.0 {
        let big = -0.5 * q - q.signum() * disc.sqrt();
        let u = big.cbrt();
        let v = if u == 0.0 { 0.0 } else { -p / (3.0 * u) };
        vec![u + v + shift]
    } else if p == 0.0 {
        vec![shift]
    } else {
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = (1.5 * q / p * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| r * (theta - 2.0 * PI * k as f64 / 3.0).cos() + shift)
            .collect()
    };
    raw.into_iter()
        .map(|mut x| {
            for _ in 0..4 {
                let f = ((c3 * x + c2) * x + c1) * x + c0;
                let df = (3.0 * c3 * x + 2.0 * c2) * x + c1;
                if df == 0.0 {
                    break;
                }
                let next = x - f / df;
                if !next.is_finite() {
                    break;
                }
                x = next;
            }
            x
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    MuSmall,
    MuLarge,
    AlphaLarge,
    AlphaSmall,
    Sigma0Large,
    Sigma0Small,
}

impl Regime {
    pub const ALL: [Regime; 6] = [
        Regime::MuSmall,
        Regime::MuLarge,
        Regime::AlphaLarge,
        Regime::AlphaSmall,
        Regime::Sigma0Large,
        Regime::Sigma0Small,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::MuSmall => "mu_small",
            Regime::MuLarge => "mu_large",
            Regime::AlphaLarge => "alpha_large",
            Regime::AlphaSmall => "alpha_small",
            Regime::Sigma0Large => "sigma0_large",
            Regime::Sigma0Small => "sigma0_small",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| invalid("regime", format!("unknown regime '{s}'")))
    }
}

/// Leading term plus first correction of the optimal weight in the given
/// regime. The parameter ordering each regime assumes is not checked.
///
/// * `mu_small`, `alpha_large`: `μ₀/(aS) − σ⁴μ₀³/(aαS⁴)` with `S = σ²_min+σ₀²+σ²`
/// * `mu_large`, `alpha_small`: `√α/(aσ) − α/(2aμ₀)`
/// * `sigma0_large`: `μ₀/(aσ₀²) − μ₀(σ²_min+σ²)/(aσ₀⁴)`
/// * `sigma0_small` (taking `σ_min = 0`): `(−σα + √(α(4μ₀²+σ²α)))/(2aμ₀σ)`
pub fn asymptotic_weight(p: &UnivariateProblem, regime: Regime) -> f64 {
    let (mu, a, alpha, s2) = (p.mu0, p.a, p.alpha, p.sigma_sq);
    match regime {
        Regime::MuSmall | Regime::AlphaLarge => {
            let s = p.total_var();
            mu / (a * s) - s2 * s2 * mu.powi(3) / (a * alpha * s.powi(4))
        }
        Regime::MuLarge | Regime::AlphaSmall => alpha.sqrt() / (a * s2.sqrt()) - alpha / (2.0 * a * mu),
        Regime::Sigma0Large => {
            let v0 = p.sigma0_sq;
            mu / (a * v0) - mu * (p.sigma_min_sq + s2) / (a * v0 * v0)
        }
        Regime::Sigma0Small => {
            if mu == 0.0 {
                return 0.0;
            }
            let sigma = s2.sqrt();
            (-sigma * alpha + (alpha * (4.0 * mu * mu + s2 * alpha)).sqrt()) / (2.0 * a * mu * sigma)
        }
    }
}
