//! Shared domain types and the CARA utility primitives.
//!
//! Expected utilities of CARA investors with Gaussian outcomes are always of the
//! form `-exp(u)`. They overflow easily for large risk aversion, so they are
//! carried as [`LogValue`] (sign plus log-magnitude) and exponentiated only on
//! request.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;

/// Absolute per-entry tolerance for the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Minimum eigenvalue tolerated in a positive semidefinite covariance.
pub const PSD_TOL: f64 = 1e-10;

/// Symmetric positive semidefinite covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    /// Validates symmetry and positive semidefiniteness. Non-symmetric input is
    /// rejected, never symmetrized.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: m.nrows().max(1),
                actual: m.ncols(),
            });
        }
        let n = m.nrows();
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(invalid("sigma", format!("non-finite entry at ({i}, {j})")));
                }
                let gap = (v - m[(j, i)]).abs();
                if gap > SYMMETRY_TOL {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        gap,
                    });
                }
            }
        }
        let min_eigenvalue = linalg::symmetric_eigenvalues(&m)[0];
        if min_eigenvalue < -PSD_TOL {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue });
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(linalg::from_rows(rows)?)
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn quad_form(&self, w: &DVector<f64>) -> f64 {
        linalg::quad_form(&self.0, w)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::symmetric_eigenvalues(&self.0)[0]
    }

    pub fn condition_number(&self) -> f64 {
        linalg::condition_number(&self.0)
    }

    /// Rejects matrices with a non-positive diagonal entry; every allocator
    /// requires strictly positive variances.
    pub fn require_positive_diagonal(&self) -> Result<()> {
        match (0..self.dim()).find(|&i| self.0[(i, i)] <= 0.0) {
            Some(i) => Err(invalid("sigma", format!("variance of asset {i} is not positive"))),
            None => Ok(()),
        }
    }

    /// `Σ⁻¹ b`, rejecting ill-conditioned matrices.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        linalg::solve_spd(&self.0, b)
    }
}

/// Beliefs about expected returns: `μ ~ N(μ₀, Σ₀)` with diagonal `Σ₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnBeliefs {
    mu0: DVector<f64>,
    sigma0_diag: DVector<f64>,
}

impl ReturnBeliefs {
    pub fn new(mu0: DVector<f64>, sigma0_diag: DVector<f64>) -> Result<Self> {
        if mu0.len() != sigma0_diag.len() {
            return Err(Error::DimensionMismatch {
                expected: mu0.len(),
                actual: sigma0_diag.len(),
            });
        }
        if mu0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("mu0", "entries must be finite"));
        }
        if sigma0_diag.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("sigma0_diag", "entries must be finite and nonnegative"));
        }
        Ok(Self { mu0, sigma0_diag })
    }

    /// Beliefs with no expected-return uncertainty.
    pub fn certain(mu0: DVector<f64>) -> Self {
        let n = mu0.len();
        Self {
            mu0,
            sigma0_diag: DVector::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn sigma0_diag(&self) -> &DVector<f64> {
        &self.sigma0_diag
    }

    /// Dense diagonal `Σ₀`.
    pub fn sigma0(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.sigma0_diag)
    }

    pub fn has_mu_uncertainty(&self) -> bool {
        self.sigma0_diag.iter().any(|&v| v > 0.0)
    }

    /// `wᵀ Σ₀ w`
    pub fn sigma0_quad(&self, w: &DVector<f64>) -> f64 {
        w.iter()
            .zip(self.sigma0_diag.iter())
            .map(|(wi, s)| s * wi * wi)
            .sum()
    }
}

/// Asset universe with return beliefs, covariance and risk aversion.
///
/// A nonzero risk-free rate is folded into `μ₀` at construction
/// (`μ₀ ← μ₀ − r₀·1`), so every consumer sees excess returns.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioProblem {
    beliefs: ReturnBeliefs,
    sigma: CovMatrix,
    risk_aversion: f64,
    risk_free: f64,
}

impl PortfolioProblem {
    pub fn new(beliefs: ReturnBeliefs, sigma: CovMatrix, risk_aversion: f64) -> Result<Self> {
        Self::with_risk_free(beliefs, sigma, risk_aversion, 0.0)
    }

    pub fn with_risk_free(
        beliefs: ReturnBeliefs,
        sigma: CovMatrix,
        risk_aversion: f64,
        risk_free: f64,
    ) -> Result<Self> {
        if beliefs.dim() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                actual: beliefs.dim(),
            });
        }
        if !(risk_aversion > 0.0) || !risk_aversion.is_finite() {
            return Err(invalid("risk_aversion", "must be finite and strictly positive"));
        }
        if !risk_free.is_finite() {
            return Err(invalid("risk_free", "must be finite"));
        }
        let beliefs = if risk_free != 0.0 {
            ReturnBeliefs {
                mu0: beliefs.mu0.add_scalar(-risk_free),
                sigma0_diag: beliefs.sigma0_diag,
            }
        } else {
            beliefs
        };
        Ok(Self {
            beliefs,
            sigma,
            risk_aversion,
            risk_free,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn beliefs(&self) -> &ReturnBeliefs {
        &self.beliefs
    }

    /// Expected excess returns (already net of the risk-free rate).
    pub fn mu0(&self) -> &DVector<f64> {
        &self.beliefs.mu0
    }

    pub fn sigma(&self) -> &CovMatrix {
        &self.sigma
    }

    pub fn risk_aversion(&self) -> f64 {
        self.risk_aversion
    }

    pub fn risk_free(&self) -> f64 {
        self.risk_free
    }

    /// Classical mean-variance solution `Σ⁻¹μ₀ / a`.
    pub fn mv_weights(&self) -> Result<Weights> {
        let w = self.sigma.solve(self.mu0())? / self.risk_aversion;
        Weights::new(w)
    }

    pub fn check_weights(&self, w: &Weights) -> Result<()> {
        if w.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: w.dim(),
            });
        }
        Ok(())
    }
}

/// Portfolio weights; entries may be negative or exceed one unless a
/// constraint set says otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(DVector<f64>);

impl Weights {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("weights", "entries must be finite"));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }
}

/// Smooth turnover penalty `exp(η/2 |w − w₀|²)` folded into the utility.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionCost {
    eta: f64,
    target: DVector<f64>,
}

impl TransactionCost {
    pub fn new(eta: f64, target: DVector<f64>) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(invalid("eta", "must be finite and nonnegative"));
        }
        Ok(Self { eta, target })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }
}

/// Signed value stored as `sign · exp(log_magnitude)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    pub sign: f64,
    pub log_magnitude: f64,
}

impl LogValue {
    pub fn negative(log_magnitude: f64) -> Self {
        Self {
            sign: -1.0,
            log_magnitude,
        }
    }

    /// Raw value; overflows to `-inf` for huge exponents.
    pub fn value(&self) -> f64 {
        self.sign * self.log_magnitude.exp()
    }
}

/// CARA utility `(1 − e^{−a x})/a`, linear at `a = 0`.
pub fn cara_utility(x: f64, a: f64) -> f64 {
    if a == 0.0 {
        x
    } else {
        // -expm1(-ax)/a keeps continuity as a -> 0
        -(-a * x).exp_m1() / a
    }
}

/// Expected CARA utility (up to the affine map `(1 + ·)/a`) of Gaussian
/// portfolio returns: `−exp(½a² wᵀΣw − a μᵀw)`.
pub fn gaussian_expected_utility(problem: &PortfolioProblem, w: &Weights) -> Result<LogValue> {
    problem.check_weights(w)?;
    let a = problem.risk_aversion();
    let v = w.as_vector();
    let log_mag = 0.5 * a * a * problem.sigma().quad_form(v) - a * problem.mu0().dot(v);
    Ok(LogValue::negative(log_mag))
}

/// Folds a quadratic turnover penalty into the problem:
/// `μ′ = μ + (η/a) w₀`, `Σ′ = Σ + (η/a²) I`.
pub fn apply_transaction_cost(
    problem: &PortfolioProblem,
    tc: &TransactionCost,
) -> Result<PortfolioProblem> {
    let n = problem.dim();
    if tc.target.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: tc.target.len(),
        });
    }
    if tc.eta == 0.0 {
        return Ok(problem.clone());
    }
    let a = problem.risk_aversion();
    let mu = problem.mu0() + &tc.target * (tc.eta / a);
    let sigma = problem.sigma().matrix() + DMatrix::identity(n, n) * (tc.eta / (a * a));
    Ok(PortfolioProblem {
        beliefs: ReturnBeliefs {
            mu0: mu,
            sigma0_diag: problem.beliefs.sigma0_diag.clone(),
        },
        sigma: CovMatrix::new(sigma)?,
        risk_aversion: a,
        risk_free: problem.risk_free,
    })
}

/// JSON form of a [`PortfolioProblem`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub mu0: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    #[serde(default)]
    pub sigma0_diag: Option<Vec<f64>>,
    pub risk_aversion: f64,
    #[serde(default)]
    pub risk_free: f64,
}

impl ProblemDoc {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text)
    }

    pub fn into_problem(self) -> Result<PortfolioProblem> {
        let n = self.mu0.len();
        if self.sigma.len() != n {
            return Err(Error::Schema(format!(
                "/sigma: expected {n} rows, got {}",
                self.sigma.len()
            )));
        }
        for (i, row) in self.sigma.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Schema(format!(
                    "/sigma/{i}: expected {n} entries, got {}",
                    row.len()
                )));
            }
        }
        let sigma0 = self.sigma0_diag.unwrap_or_else(|| vec![0.0; n]);
        if sigma0.len() != n {
            return Err(Error::Schema(format!(
                "/sigma0_diag: expected {n} entries, got {}",
                sigma0.len()
            )));
        }
        let beliefs = ReturnBeliefs::new(DVector::from_vec(self.mu0), DVector::from_vec(sigma0))?;
        let sigma = CovMatrix::from_rows(&self.sigma)?;
        PortfolioProblem::with_risk_free(beliefs, sigma, self.risk_aversion, self.risk_free)
    }
}

/// Deserializes a document, reporting failures with the JSON pointer of the
/// offending field.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(&e.path().to_string());
        Error::Schema(format!("{pointer}: {}", e.inner()))
    })
}

/// Converts a serde path (`sigma[1][0]`, `.`) into a JSON pointer (`/sigma/1/0`, `/`).
pub fn json_pointer(path: &str) -> String {
    if path == "." || path.is_empty() {
        return "/".to_string();
    }
    let mut out = String::new();
    for part in path.split('.') {
        let mut rest = part;
        if let Some(idx) = rest.find('[') {
            let (name, tail) = rest.split_at(idx);
            if !name.is_empty() {
                out.push('/');
                out.push_str(name);
            }
            rest = tail;
            for seg in rest.split(['[', ']']).filter(|s| !s.is_empty()) {
                out.push('/');
                out.push_str(seg);
            }
        } else {
            out.push('/');
            out.push_str(rest);
        }
    }
    out
}
