//! Two-state (normal/stressed) scenario allocation, its risk-aversion limits,
//! the stressed equicorrelation covariance, and the minimax portfolio.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{solve_spd, MAX_CONDITION};
use crate::solver::{minimize, ConstraintSet, Objective, SolveReport, SolverOptions};
use crate::types::{parse_json, CovMatrix, Weights};

/// Equicorrelation, equivariance covariance of the stressed state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressedCovSpec {
    pub sigma_s: f64,
    pub rho_s: f64,
    pub dim: usize,
}

impl StressedCovSpec {
    pub fn new(sigma_s: f64, rho_s: f64, dim: usize) -> Result<Self> {
        if !(sigma_s > 0.0) || !sigma_s.is_finite() {
            return Err(invalid("sigma_s", "must be finite and strictly positive"));
        }
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if !rho_s.is_finite() {
            return Err(invalid("rho_s", "must be finite"));
        }
        Ok(Self { sigma_s, rho_s, dim })
    }

    /// `(largest, smallest)` eigenvalue: `σ²(1+(N−1)ρ)` and `σ²(1−ρ)`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let v = self.sigma_s * self.sigma_s;
        let one = v * (1.0 + (self.dim as f64 - 1.0) * self.rho_s);
        if self.dim == 1 {
            return (v, v);
        }
        let rest = v * (1.0 - self.rho_s);
        (one.max(rest), one.min(rest))
    }

    pub fn condition_number(&self) -> f64 {
        let (hi, lo) = self.eigenvalues();
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    }
}

/// `σ²_s((1−ρ_s)I + ρ_s 11ᵀ)`
pub fn build_stressed_cov(spec: &StressedCovSpec) -> Result<CovMatrix> {
    let (_, min) = spec.eigenvalues();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    let cond = spec.condition_number();
    if cond > MAX_CONDITION {
        log::warn!("stressed covariance is nearly singular (condition number {cond:e})");
    }
    let v = spec.sigma_s * spec.sigma_s;
    let n = spec.dim;
    CovMatrix::new(DMatrix::from_fn(n, n, |i, j| if i == j { v } else { v * spec.rho_s }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub mu: DVector<f64>,
    pub sigma: CovMatrix,
}

impl State {
    pub fn new(mu: DVector<f64>, sigma: CovMatrix) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                actual: mu.len(),
            });
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(invalid("mu", "must be finite"));
        }
        Ok(Self { mu, sigma })
    }

    /// `½a² wᵀΣw − aμᵀw`
    fn exponent(&self, w: &DVector<f64>, a: f64) -> f64 {
        0.5 * a * a * self.sigma.quad_form(w) - a * self.mu.dot(w)
    }

    fn exponent_gradient(&self, w: &DVector<f64>, a: f64) -> DVector<f64> {
        self.sigma.matrix() * w * (a * a) - &self.mu * a
    }
}

/// Normal state with probability `p`, stressed state with `1 − p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateScenario {
    pub p: f64,
    pub normal: State,
    pub stressed: State,
    pub a: f64,
}

impl TwoStateScenario {
    pub fn new(p: f64, normal: State, stressed: State, a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("p", "must lie in [0, 1]"));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(invalid("risk_aversion", "must be finite and strictly positive"));
        }
        if normal.mu.len() != stressed.mu.len() {
            return Err(Error::DimensionMismatch {
                expected: normal.mu.len(),
                actual: stressed.mu.len(),
            });
        }
        Ok(Self {
            p,
            normal,
            stressed,
            a,
        })
    }

    pub fn dim(&self) -> usize {
        self.normal.mu.len()
    }

    fn check(&self, w: &DVector<f64>) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: w.len(),
            });
        }
        Ok(())
    }

    /// `(u_n, u_s)`; a state with zero probability gives `−∞`.
    pub fn state_terms(&self, w: &DVector<f64>) -> (f64, f64) {
        let term = |prob: f64, s: &State| {
            if prob == 0.0 {
                f64::NEG_INFINITY
            } else {
                prob.ln() + s.exponent(w, self.a)
            }
        };
        (term(self.p, &self.normal), term(1.0 - self.p, &self.stressed))
    }

    /// Softmax weights of the two states at `w`.
    fn responsibilities(&self, w: &DVector<f64>) -> (f64, f64) {
        let (un, us) = self.state_terms(w);
        if us == f64::NEG_INFINITY {
            return (1.0, 0.0);
        }
        if un == f64::NEG_INFINITY {
            return (0.0, 1.0);
        }
        let m = un.max(us);
        let (en, es) = ((un - m).exp(), (us - m).exp());
        (en / (en + es), es / (en + es))
    }

    /// `max{(a/2)wᵀΣ_n w − μ_nᵀw, (a/2)wᵀΣ_s w − μ_sᵀw}`, the large-`a`
    /// objective (states with zero probability are dropped).
    pub fn high_a_objective(&self, w: &Weights) -> Result<f64> {
        self.check(w.as_vector())?;
        let v = w.as_vector();
        let f = |s: &State| s.exponent(v, self.a) / self.a;
        Ok(match self.p {
            1.0 => f(&self.normal),
            0.0 => f(&self.stressed),
            _ => f(&self.normal).max(f(&self.stressed)),
        })
    }
}

/// `log(e^{u_n} + e^{u_s})` evaluated with the max shift.
pub fn lse_objective(sc: &TwoStateScenario, w: &Weights) -> Result<f64> {
    sc.check(w.as_vector())?;
    Ok(lse(sc.state_terms(w.as_vector())))
}

fn lse((un, us): (f64, f64)) -> f64 {
    if us == f64::NEG_INFINITY {
        return un;
    }
    if un == f64::NEG_INFINITY {
        return us;
    }
    let m = un.max(us);
    m + ((un - m).exp() + (us - m).exp()).ln()
}

/// LSE divided by `a`, which keeps gradients of order one for any `a`.
struct ScaledLse<'a>(&'a TwoStateScenario);

impl Objective for ScaledLse<'_> {
    fn value(&self, w: &DVector<f64>) -> Option<f64> {
        Some(lse(self.0.state_terms(w)) / self.0.a)
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let sc = self.0;
        let (pn, ps) = sc.responsibilities(w);
        let mut g = DVector::zeros(w.len());
        if pn > 0.0 {
            g += sc.normal.exponent_gradient(w, sc.a) * pn;
        }
        if ps > 0.0 {
            g += sc.stressed.exponent_gradient(w, sc.a) * ps;
        }
        g / sc.a
    }
}

/// Minimizes the LSE objective. The report's objective and gradient norm are
/// for `LSE/a`.
pub fn solve_two_state(
    sc: &TwoStateScenario,
    constraints: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<(Weights, SolveReport)> {
    let (w, report) = minimize(&ScaledLse(sc), &DVector::zeros(sc.dim()), constraints, opts)?;
    report.ensure_stationary(1e-8)?;
    Ok((Weights::new(w)?, report))
}

/// Mixture moments `(μ̃, Σ̃)` with
/// `Σ̃ = pΣ_n + (1−p)Σ_s + p(1−p)(μ_n−μ_s)(μ_n−μ_s)ᵀ`.
pub fn mixture_moments(sc: &TwoStateScenario) -> (DVector<f64>, DMatrix<f64>) {
    let p = sc.p;
    let mu = &sc.normal.mu * p + &sc.stressed.mu * (1.0 - p);
    let diff = &sc.normal.mu - &sc.stressed.mu;
    let sigma = sc.normal.sigma.matrix() * p
        + sc.stressed.sigma.matrix() * (1.0 - p)
        + &diff * diff.transpose() * (p * (1.0 - p));
    (mu, sigma)
}

/// Small-`a` limit `Σ̃⁻¹μ̃/a`.
pub fn low_a_limit_weights(sc: &TwoStateScenario) -> Result<Weights> {
    let (mu, sigma) = mixture_moments(sc);
    Weights::new(solve_spd(&sigma, &mu)? / sc.a)
}

/// Long-only, fully invested minimum of `wᵀ(pΣ_n + (1−p)Σ_s)w + c wᵀw`.
pub fn min_variance_two_state(
    sc: &TwoStateScenario,
    c: f64,
    opts: &SolverOptions,
) -> Result<(Weights, SolveReport)> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(invalid("c", "ridge must be finite and nonnegative"));
    }
    let n = sc.dim();
    let m = sc.normal.sigma.matrix() * sc.p
        + sc.stressed.sigma.matrix() * (1.0 - sc.p)
        + DMatrix::identity(n, n) * c;
    let objective = QuadraticForm(m);
    let x0 = DVector::from_element(n, 1.0 / n as f64);
    let (w, report) = minimize(&objective, &x0, &ConstraintSet::simplex(), opts)?;
    report.ensure_stationary(1e-6)?;
    Ok((Weights::new(w)?, report))
}

struct QuadraticForm(DMatrix<f64>);

impl Objective for QuadraticForm {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        Some(x.dot(&(&self.0 * x)))
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x * 2.0
    }
}

/// `min |w|∞ + (b/2)wᵀΣw` over the long-only simplex, solved with an
/// epigraph variable `t ≥ w_i`.
pub fn minimax_portfolio(sigma: &CovMatrix, b: f64, opts: &SolverOptions) -> Result<(Weights, SolveReport)> {
    if !(b >= 0.0) || !b.is_finite() {
        return Err(invalid("b", "must be finite and nonnegative"));
    }
    let n = sigma.dim();
    let objective = Minimax {
        sigma: sigma.matrix().clone(),
        b,
    };
    let x0 = DVector::from_element(n + 1, 1.0 / n as f64);
    let cs = ConstraintSet::simplex().with_epigraph();
    let (x, report) = minimize(&objective, &x0, &cs, opts)?;
    report.ensure_stationary(1e-6)?;
    Ok((Weights::new(x.rows(0, n).into_owned())?, report))
}

/// Objective value `max_i w_i + (b/2)wᵀΣw`.
pub fn minimax_objective(sigma: &CovMatrix, b: f64, w: &Weights) -> f64 {
    let v = w.as_vector();
    v.max() + 0.5 * b * sigma.quad_form(v)
}

struct Minimax {
    sigma: DMatrix<f64>,
    b: f64,
}

impl Objective for Minimax {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        let n = self.sigma.nrows();
        let w = x.rows(0, n);
        Some(x[n] + 0.5 * self.b * w.dot(&(&self.sigma * w)))
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.sigma.nrows();
        let w = x.rows(0, n);
        let gw = &self.sigma * w * self.b;
        let mut g = DVector::zeros(n + 1);
        g.rows_mut(0, n).copy_from(&gw);
        g[n] = 1.0;
        g
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDoc {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressedSpecDoc {
    pub sigma_s: f64,
    pub rho_s: f64,
}

/// Stressed state: either an explicit covariance or an equicorrelation spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressedDoc {
    pub mu: Vec<f64>,
    #[serde(default)]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub spec: Option<StressedSpecDoc>,
}

/// JSON form of a [`TwoStateScenario`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub p: f64,
    #[serde(default)]
    pub risk_aversion: Option<f64>,
    pub normal: StateDoc,
    pub stressed: StressedDoc,
}

impl ScenarioDoc {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text)
    }

    /// `a` overrides `risk_aversion` from the document; one of them is required.
    pub fn into_scenario(self, a: Option<f64>) -> Result<TwoStateScenario> {
        let a = a
            .or(self.risk_aversion)
            .ok_or_else(|| Error::Schema("/risk_aversion: missing (and not given on the command line)".into()))?;
        let n = self.normal.mu.len();
        let normal = State::new(DVector::from_vec(self.normal.mu), cov_rows(&self.normal.sigma, n, "/normal/sigma")?)?;
        let sigma_s = match (self.stressed.sigma, self.stressed.spec) {
            (Some(rows), None) => cov_rows(&rows, n, "/stressed/sigma")?,
            (None, Some(spec)) => build_stressed_cov(&StressedCovSpec::new(spec.sigma_s, spec.rho_s, n)?)?,
            _ => {
                return Err(Error::Schema(
                    "/stressed: exactly one of `sigma` and `spec` is required".into(),
                ))
            }
        };
        if self.stressed.mu.len() != n {
            return Err(Error::Schema(format!(
                "/stressed/mu: expected {n} entries, got {}",
                self.stressed.mu.len()
            )));
        }
        let stressed = State::new(DVector::from_vec(self.stressed.mu), sigma_s)?;
        TwoStateScenario::new(self.p, normal, stressed, a)
    }
}

fn cov_rows(rows: &[Vec<f64>], n: usize, pointer: &str) -> Result<CovMatrix> {
    if rows.len() != n {
        return Err(Error::Schema(format!("{pointer}: expected {n} rows, got {}", rows.len())));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::Schema(format!("{pointer}/{i}: expected {n} entries, got {}", rows[i].len())));
    }
    CovMatrix::from_rows(rows)
}
