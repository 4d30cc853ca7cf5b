use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::RngStream;
use crate::error::{invalid, Error, Result};
use crate::types::CovMatrix;

/// Covariance noise `S ~ W_N(α, Σ/α)`, so that `E[S] = Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WishartNoiseModel {
    alpha: f64,
    sigma: CovMatrix,
}

impl WishartNoiseModel {
    pub fn new(alpha: f64, sigma: CovMatrix) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid("alpha", "must be finite and strictly positive"));
        }
        Ok(Self { alpha, sigma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> &CovMatrix {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    /// Bartlett sampler. Valid only for `α > dim − 1`.
    pub fn sampler(&self) -> Result<WishartSampler> {
        let n = self.dim();
        if !(self.alpha > (n as f64) - 1.0) {
            return Err(Error::Domain(format!(
                "Bartlett construction needs alpha > dim - 1 (alpha = {}, dim = {n})",
                self.alpha
            )));
        }
        let scaled = self.sigma.matrix() / self.alpha;
        let chol = scaled
            .cholesky()
            .ok_or(Error::NotPositiveDefinite {
                min_eigenvalue: self.sigma.min_eigenvalue(),
            })?
            .l();
        let diag = (0..n)
            .map(|i| Gamma::new(0.5 * (self.alpha - i as f64), 2.0).expect("dof > 0"))
            .collect();
        Ok(WishartSampler { chol, diag })
    }

    /// Draws `n` matrices.
    pub fn sample(&self, rng: &mut RngStream, n: usize) -> Result<Vec<DMatrix<f64>>> {
        let sampler = self.sampler()?;
        Ok((0..n).map(|_| sampler.draw(rng)).collect())
    }

    /// `ln E[exp(½a² wᵀSw)] = −(α/2) ln(1 − (a²/α) wᵀΣw)`.
    ///
    /// `|I − (2/α)WΣ|` collapses to `1 − (a²/α)wᵀΣw` because `W` has rank one.
    pub fn log_mgf(&self, w: &DVector<f64>, a: f64) -> Result<f64> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: w.len(),
            });
        }
        let base = 1.0 - a * a / self.alpha * self.sigma.quad_form(w);
        if !(base > 0.0) {
            return Err(Error::Domain(format!(
                "Wishart mgf diverges: 1 - (a^2/alpha) w'Σw = {base}"
            )));
        }
        Ok(-0.5 * self.alpha * (-(a * a / self.alpha * self.sigma.quad_form(w))).ln_1p())
    }

    pub fn mgf(&self, w: &DVector<f64>, a: f64) -> Result<f64> {
        self.log_mgf(w, a).map(f64::exp)
    }
}

/// Precomputed Bartlett factors.
#[derive(Debug, Clone)]
pub struct WishartSampler {
    chol: DMatrix<f64>,
    diag: Vec<Gamma<f64>>,
}

impl WishartSampler {
    pub fn draw(&self, rng: &mut RngStream) -> DMatrix<f64> {
        let n = self.chol.nrows();
        let mut bartlett = DMatrix::zeros(n, n);
        for i in 0..n {
            bartlett[(i, i)] = self.diag[i].sample(rng).sqrt();
            for j in 0..i {
                bartlett[(i, j)] = StandardNormal.sample(rng);
            }
        }
        let la = &self.chol * bartlett;
        let s = &la * la.transpose();
        // exact symmetry
        DMatrix::from_fn(n, n, |i, j| if i <= j { s[(i, j)] } else { s[(j, i)] })
    }
}

pub fn sample_wishart(
    model: &WishartNoiseModel,
    rng: &mut RngStream,
    n: usize,
) -> Result<Vec<DMatrix<f64>>> {
    model.sample(rng, n)
}

/// `(1 − (a²/α) wᵀΣw)^(−α/2)`
pub fn wishart_mgf(model: &WishartNoiseModel, w: &DVector<f64>, a: f64) -> Result<f64> {
    model.mgf(w, a)
}

/// Volatilities and correlation of a 2×2 covariance sample.
pub fn vol_corr_2d(s: &DMatrix<f64>) -> (f64, f64, f64) {
    let va = s[(0, 0)].sqrt();
    let vb = s[(1, 1)].sqrt();
    (va, vb, s[(0, 1)] / (va * vb))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_asset() -> CovMatrix {
        CovMatrix::from_rows(&[vec![0.04, 0.04], vec![0.04, 0.16]]).unwrap()
    }

    #[test]
    fn rejects_small_alpha() {
        let m = WishartNoiseModel::new(1.0, two_asset()).unwrap();
        assert!(matches!(m.sampler(), Err(Error::Domain(_))));
        assert!(WishartNoiseModel::new(1.5, two_asset())
            .unwrap()
            .sampler()
            .is_ok());
    }

    #[test]
    fn mgf_examples() {
        let m = WishartNoiseModel::new(100.0, CovMatrix::diagonal(&[0.04]).unwrap()).unwrap();
        assert_eq!(m.mgf(&DVector::zeros(1), 1.0).unwrap(), 1.0);
        let v = m.mgf(&DVector::from_vec(vec![1.0]), 1.0).unwrap();
        assert!((v - (1.0f64 - 4e-4).powf(-50.0)).abs() < 1e-14);
        assert!((v - 1.0202).abs() < 1e-4);

        let big = WishartNoiseModel::new(1e12, CovMatrix::diagonal(&[0.04]).unwrap()).unwrap();
        let v = big.mgf(&DVector::from_vec(vec![1.0]), 1.0).unwrap();
        assert!((v - 0.02f64.exp()).abs() < 1e-9);

        let tiny = WishartNoiseModel::new(0.01, CovMatrix::diagonal(&[0.04]).unwrap()).unwrap();
        assert!(tiny.mgf(&DVector::from_vec(vec![1.0]), 1.0).is_err());
    }

    #[test]
    fn samples_are_symmetric_psd_with_mean_sigma() {
        let m = WishartNoiseModel::new(10.0, two_asset()).unwrap();
        let mut rng = RngStream::new(1);
        let xs = m.sample(&mut rng, 20_000).unwrap();
        let mut mean = DMatrix::zeros(2, 2);
        for s in &xs {
            assert_eq!(s[(0, 1)], s[(1, 0)]);
            assert!(crate::linalg::symmetric_eigenvalues(s)[0] > -1e-14);
            mean += s;
        }
        mean /= xs.len() as f64;
        // Var(S_ij) = (Σ_ij² + Σ_ii Σ_jj)/α
        let sig = two_asset();
        for i in 0..2 {
            for j in 0..2 {
                let s = sig.matrix();
                let var = (s[(i, j)].powi(2) + s[(i, i)] * s[(j, j)]) / 10.0;
                let se = (var / xs.len() as f64).sqrt();
                assert!((mean[(i, j)] - s[(i, j)]).abs() < 4.0 * se);
            }
        }
    }

    #[test]
    fn univariate_reduces_to_scaled_chi_squared() {
        let m = WishartNoiseModel::new(7.5, CovMatrix::diagonal(&[0.09]).unwrap()).unwrap();
        let xs = m.sample(&mut RngStream::new(9), 50_000).unwrap();
        let vals: Vec<f64> = xs.iter().map(|s| s[(0, 0)]).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = 2.0 * 0.09f64.powi(2) / 7.5;
        assert!((mean - 0.09).abs() < 3.0 * (var / n).sqrt());
    }
}
