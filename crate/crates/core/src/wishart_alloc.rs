//! Multivariate allocation under Wishart covariance noise `S ~ W(α, Σ/α)`,
//! optionally combined with Gaussian noise `μ ~ N(μ₀, Σ₀)` on expected returns.

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::linalg::solve_spd;
use crate::solver::{maximize, ConstraintSet, Objective, SolveReport, SolverOptions};
use crate::types::{PortfolioProblem, Weights};

const FIXED_POINT_ITERS: usize = 200;
/// Grid used to look for additional sign changes of the fixed-point residual.
const ROOT_SCAN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct WishartAllocProblem {
    pub problem: PortfolioProblem,
    pub alpha: f64,
}

/// Quantities describing a Wishart-optimal portfolio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WishartDiagnostics {
    /// Realized quadratic risk `wᵀΣw`.
    pub d: f64,
    /// Signal-to-noise `μ₀ᵀΣ⁻¹μ₀`.
    pub q: f64,
    /// `1 − (a²/α) d`
    pub g: f64,
    /// More than one fixed point was bracketed; the best one was returned.
    pub multiple_roots: bool,
}

impl WishartAllocProblem {
    pub fn new(problem: PortfolioProblem, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid("alpha", "must be finite and strictly positive"));
        }
        Ok(Self { problem, alpha })
    }

    fn a(&self) -> f64 {
        self.problem.risk_aversion()
    }

    /// Upper end (exclusive) of admissible quadratic risk, `α/a²`.
    pub fn max_risk(&self) -> f64 {
        self.alpha / (self.a() * self.a())
    }

    /// `μ₀ᵀw − (a/2)wᵀΣ₀w + (α/2a) ln(1 − (a²/α)wᵀΣw)`
    pub fn marginalized_objective(&self, w: &Weights) -> Result<f64> {
        self.problem.check_weights(w)?;
        self.objective_at(w.as_vector())
    }

    fn objective_at(&self, w: &DVector<f64>) -> Result<f64> {
        let a = self.a();
        let x = self.problem.sigma().quad_form(w) / self.max_risk();
        if !(x < 1.0) {
            return Err(Error::Domain(format!(
                "(a²/α) w'Σw = {x} is not below 1"
            )));
        }
        Ok(self.problem.mu0().dot(w) - 0.5 * a * self.problem.beliefs().sigma0_quad(w)
            + 0.5 * self.alpha / a * (-x).ln_1p())
    }

    /// `μ₀ − aΣ₀w − (a/g)Σw`; only meaningful inside the domain.
    pub fn objective_gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let a = self.a();
        let sw = self.problem.sigma().matrix() * w;
        let g = 1.0 - w.dot(&sw) / self.max_risk();
        self.problem.mu0() - self.problem.beliefs().sigma0_diag().component_mul(w) * a - sw * (a / g)
    }

    /// `‖∇‖∞` of the marginalized objective.
    pub fn stationarity_residual(&self, w: &Weights) -> Result<f64> {
        self.marginalized_objective(w)?;
        Ok(self.objective_gradient(w.as_vector()).amax())
    }

    fn signal_to_noise(&self) -> Result<f64> {
        let x = self.problem.sigma().solve(self.problem.mu0())?;
        Ok(self.problem.mu0().dot(&x))
    }

    /// `w(d) = (g/a)(Σ + gΣ₀)⁻¹μ₀` with `g = 1 − a²d/α`, plus `dw/dg`.
    fn weights_for_risk(&self, d: f64) -> Result<(DVector<f64>, DVector<f64>, f64)> {
        let a = self.a();
        let g = 1.0 - d / self.max_risk();
        let mut m = self.problem.sigma().matrix().clone();
        let s0 = self.problem.beliefs().sigma0_diag();
        for i in 0..m.nrows() {
            m[(i, i)] += g * s0[i];
        }
        let base = solve_spd(&m, self.problem.mu0())?;
        let w = &base * (g / a);
        let rhs = self.problem.mu0() - s0.component_mul(&w) * a;
        let dw = solve_spd(&m, &rhs)? / a;
        Ok((w, dw, g))
    }

    /// `w(d)ᵀΣw(d) − d` and its derivative in `d`.
    fn fixed_point_residual(&self, d: f64) -> Result<(f64, f64, DVector<f64>)> {
        let (w, dw, _) = self.weights_for_risk(d)?;
        let sw = self.problem.sigma().matrix() * &w;
        let r = w.dot(&sw) - d;
        let dr = -2.0 * sw.dot(&dw) / self.max_risk() - 1.0;
        Ok((r, dr, w))
    }

    fn refine_root(&self, mut lo: f64, mut hi: f64) -> Result<(f64, DVector<f64>)> {
        let mut x = 0.5 * (lo + hi);
        for _ in 0..FIXED_POINT_ITERS {
            let (r, dr, w) = self.fixed_point_residual(x)?;
            if r == 0.0 {
                return Ok((x, w));
            }
            if r > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - r / dr;
            let next = if newton > lo && newton < hi && dr.is_finite() {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE)
                || hi - lo <= 4.0 * f64::EPSILON * hi
            {
                let (_, _, w) = self.fixed_point_residual(next)?;
                return Ok((next, w));
            }
            x = next;
        }
        Err(Error::Convergence {
            iterations: FIXED_POINT_ITERS,
            detail: format!("risk fixed point not found in [{lo}, {hi}]"),
        })
    }
}

impl Objective for WishartAllocProblem {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        self.objective_at(x).ok()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.objective_gradient(x)
    }
}

/// `g_W(q, α) = (√(α(α+4q)) − α)/(2q)`, with `g_W(0, α) = 1`.
pub fn scaling_g_wishart(q: f64, alpha: f64) -> Result<f64> {
    check_q(q)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid("alpha", "must be finite and strictly positive"));
    }
    Ok(2.0 / ((1.0 + 4.0 * q / alpha).sqrt() + 1.0))
}

/// Optimal quadratic risk `d = (α/(2a²q))(2q + α − √(α(4q+α)))`.
pub fn risk_wishart(q: f64, alpha: f64, a: f64) -> Result<f64> {
    check_q(q)?;
    if !(alpha > 0.0) || !(a > 0.0) {
        return Err(invalid("alpha", "alpha and a must be strictly positive"));
    }
    Ok(2.0 * alpha * q / (a * a * (2.0 * q + alpha + (alpha * (alpha + 4.0 * q)).sqrt())))
}

/// `g_LD(q) = (√(1+2q) − 1)/q`, with `g_LD(0) = 1`.
pub fn scaling_g_laplace(q: f64) -> Result<f64> {
    check_q(q)?;
    Ok(2.0 / ((1.0 + 2.0 * q).sqrt() + 1.0))
}

/// `d̃ = 2(1 + q − √(1+2q))/(a²q)`
pub fn risk_laplace(q: f64, a: f64) -> Result<f64> {
    check_q(q)?;
    if !(a > 0.0) {
        return Err(invalid("a", "must be strictly positive"));
    }
    Ok(2.0 * q / (a * a * (1.0 + q + (1.0 + 2.0 * q).sqrt())))
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(invalid("q", "must be finite and nonnegative"));
    }
    Ok(())
}

/// Closed form for `Σ₀ = 0`: the mean-variance weights scaled by `g_W(q, α)`.
pub fn solve_weights_no_mu_uncertainty(p: &WishartAllocProblem) -> Result<(Weights, WishartDiagnostics)> {
    if p.problem.beliefs().has_mu_uncertainty() {
        return Err(invalid("sigma0_diag", "must be zero for the closed-form solution"));
    }
    let a = p.a();
    let x = p.problem.sigma().solve(p.problem.mu0())?;
    let q = p.problem.mu0().dot(&x);
    let g = scaling_g_wishart(q, p.alpha)?;
    let w = x * (g / a);
    let d = p.problem.sigma().quad_form(&w);
    Ok((
        Weights::new(w)?,
        WishartDiagnostics {
            d,
            q,
            g,
            multiple_roots: false,
        },
    ))
}

/// Joint covariance and expected-return uncertainty: solves the scalar
/// fixed point `d = w(d)ᵀΣw(d)` on `[0, α/a²]`.
pub fn solve_weights_full(p: &WishartAllocProblem) -> Result<(Weights, WishartDiagnostics)> {
    if !p.problem.beliefs().has_mu_uncertainty() {
        return solve_weights_no_mu_uncertainty(p);
    }
    let q = p.signal_to_noise()?;
    let n = p.problem.dim();
    if p.problem.mu0().iter().all(|&m| m == 0.0) {
        return Ok((
            Weights::zeros(n),
            WishartDiagnostics {
                d: 0.0,
                q,
                g: 1.0,
                multiple_roots: false,
            },
        ));
    }
    let d_max = p.max_risk();
    let grid: Vec<f64> = (0..=ROOT_SCAN).map(|k| d_max * k as f64 / ROOT_SCAN as f64).collect();
    let mut residuals = Vec::with_capacity(grid.len());
    for &d in &grid {
        residuals.push(p.fixed_point_residual(d)?.0);
    }
    let mut roots = Vec::new();
    for k in 0..ROOT_SCAN {
        let (r0, r1) = (residuals[k], residuals[k + 1]);
        if r0 == 0.0 {
            roots.push((grid[k], p.weights_for_risk(grid[k])?.0));
        } else if r0 > 0.0 && r1 < 0.0 || r0 < 0.0 && r1 > 0.0 {
            let (lo, hi) = if r0 > 0.0 { (grid[k], grid[k + 1]) } else { (grid[k + 1], grid[k]) };
            roots.push(refine_oriented(p, lo, hi)?);
        }
    }
    let multiple_roots = roots.len() > 1;
    if multiple_roots {
        log::warn!("{} fixed points of the risk equation bracketed", roots.len());
    }
    let (d, w) = roots
        .into_iter()
        .filter_map(|(d, w)| p.objective_at(&w).ok().map(|v| (d, w, v)))
        .max_by(|x, y| x.2.total_cmp(&y.2))
        .map(|(d, w, _)| (d, w))
        .ok_or_else(|| Error::Convergence {
            iterations: ROOT_SCAN,
            detail: "no sign change of the risk fixed-point residual".into(),
        })?;
    Ok((
        Weights::new(w)?,
        WishartDiagnostics {
            d,
            q,
            g: 1.0 - d / d_max,
            multiple_roots,
        },
    ))
}

/// Root refinement when the residual is positive at `lo`, which may lie above
/// `hi` for increasing crossings.
fn refine_oriented(p: &WishartAllocProblem, pos: f64, neg: f64) -> Result<(f64, DVector<f64>)> {
    if pos < neg {
        p.refine_root(pos, neg)
    } else {
        // increasing crossing: plain bisection
        let (mut pos, mut neg) = (pos, neg);
        for _ in 0..FIXED_POINT_ITERS {
            let mid = 0.5 * (pos + neg);
            if mid == pos || mid == neg {
                break;
            }
            if p.fixed_point_residual(mid)?.0 > 0.0 {
                pos = mid;
            } else {
                neg = mid;
            }
        }
        let d = 0.5 * (pos + neg);
        Ok((d, p.weights_for_risk(d)?.0))
    }
}

/// Numerical maximization of the marginalized objective under constraints.
pub fn solve_weights_constrained(
    p: &WishartAllocProblem,
    constraints: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<(Weights, SolveReport)> {
    let n = p.problem.dim();
    let (w, report) = maximize(p, &DVector::zeros(n), constraints, opts)?;
    report.ensure_stationary(1e-6)?;
    Ok((Weights::new(w)?, report))
}
