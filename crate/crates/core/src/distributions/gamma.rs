use rand_distr::{Distribution, Gamma};

use super::RngStream;
use crate::error::{invalid, Error, Result};

/// Variance noise `s² ~ Γ(shape α/2, scale 2σ²/α) + σ²_min`.
///
/// `E[s²] = σ²_min + σ²` and `Var[s²] = 2σ⁴/α`; larger `α` means less noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedGammaNoise {
    alpha: f64,
    sigma2: f64,
    sigma2_min: f64,
}

impl ShiftedGammaNoise {
    pub fn new(alpha: f64, sigma2: f64, sigma2_min: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid("alpha", "must be finite and strictly positive"));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(invalid("sigma2", "must be finite and strictly positive"));
        }
        if !(sigma2_min >= 0.0) || !sigma2_min.is_finite() {
            return Err(invalid("sigma2_min", "must be finite and nonnegative"));
        }
        Ok(Self {
            alpha,
            sigma2,
            sigma2_min,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma2_min(&self) -> f64 {
        self.sigma2_min
    }

    pub fn shape(&self) -> f64 {
        self.alpha / 2.0
    }

    pub fn scale(&self) -> f64 {
        2.0 * self.sigma2 / self.alpha
    }

    pub fn mean(&self) -> f64 {
        self.sigma2_min + self.sigma2
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.sigma2 * self.sigma2 / self.alpha
    }

    /// Upper end (exclusive) of the mgf convergence domain, `α/(2σ²)`.
    pub fn mgf_limit(&self) -> f64 {
        self.alpha / (2.0 * self.sigma2)
    }

    /// `ln E[exp(t s²)] = σ²_min t − (α/2) ln(1 − 2σ²t/α)`.
    pub fn log_mgf(&self, t: f64) -> Result<f64> {
        let base = 1.0 - t / self.mgf_limit();
        if !(base > 0.0) {
            return Err(Error::Domain(format!(
                "shifted-gamma mgf diverges at t = {t} (limit {})",
                self.mgf_limit()
            )));
        }
        Ok(self.sigma2_min * t - 0.5 * self.alpha * (-t / self.mgf_limit()).ln_1p())
    }

    pub fn mgf(&self, t: f64) -> Result<f64> {
        self.log_mgf(t).map(f64::exp)
    }

    pub fn sample_one(&self, rng: &mut RngStream) -> f64 {
        let g = Gamma::new(self.shape(), self.scale()).expect("validated parameters");
        g.sample(rng) + self.sigma2_min
    }

    pub fn sample(&self, rng: &mut RngStream, n: usize) -> Vec<f64> {
        let g = Gamma::new(self.shape(), self.scale()).expect("validated parameters");
        (0..n).map(|_| g.sample(rng) + self.sigma2_min).collect()
    }
}

/// Draws `n` variance samples from the shifted gamma model.
pub fn sample_shifted_gamma(model: &ShiftedGammaNoise, rng: &mut RngStream, n: usize) -> Vec<f64> {
    model.sample(rng, n)
}

/// Moment generating function `exp(σ²_min t)(1 − 2σ²t/α)^(−α/2)`.
pub fn shifted_gamma_mgf(model: &ShiftedGammaNoise, t: f64) -> Result<f64> {
    model.mgf(t)
}
