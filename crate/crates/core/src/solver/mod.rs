//! Smooth convex minimization over simple feasible sets.
//!
//! Two iteration schemes share one contract:
//!
//! * affine feasible sets (no constraint, or only the budget) use limited-memory
//!   BFGS on projected gradients;
//! * sets with bounds or an epigraph auxiliary use the spectral projected
//!   gradient method with a monotone backtracking search along the projection
//!   arc.
//!
//! Both backtrack whenever a trial point leaves the objective's open domain, so
//! every accepted iterate is in-domain, and both accept a step only if the
//! objective does not increase.

mod projection;

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};

pub use projection::{project_simplex, ConstraintSet};

/// Smooth objective on an open domain.
pub trait Objective {
    /// `None` outside the open domain.
    fn value(&self, x: &DVector<f64>) -> Option<f64>;
    /// Gradient; only called at in-domain points.
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// Objective assembled from closures.
pub struct FnObjective<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&DVector<f64>) -> Option<f64>,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        (self.value)(x).filter(|v| v.is_finite())
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }
}

/// Maximizing `f` is minimizing `−f`.
pub struct Negated<'a, O: ?Sized>(pub &'a O);

impl<O: Objective + ?Sized> Objective for Negated<'_, O> {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        self.0.value(x).map(|v| -v)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        -self.0.gradient(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    /// Line search could not make progress (objective flat to rounding).
    Stalled,
    Infeasible,
    DomainBreach,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Scaled (projected-)gradient norm at the returned point.
    pub grad_norm: f64,
    pub objective: f64,
    pub status: SolveStatus,
    /// Objective value after each accepted iteration, starting with `x0`.
    pub history: Vec<f64>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Accepts a converged report, or one that stopped early with a scaled
    /// gradient norm already below `tol`.
    pub fn ensure_stationary(&self, tol: f64) -> Result<()> {
        if self.converged() || (self.status != SolveStatus::DomainBreach && self.grad_norm <= tol) {
            Ok(())
        } else {
            self.ensure_converged()
        }
    }

    /// Turns a non-converged report into an error.
    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged() {
            Ok(())
        } else {
            Err(Error::Convergence {
                iterations: self.iterations,
                detail: format!(
                    "{:?} with scaled gradient norm {:e}",
                    self.status, self.grad_norm
                ),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Threshold on the scaled projected-gradient infinity norm
    /// `‖P(x − ∇f) − x‖∞ / max(1, |f|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            memory: 10,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 80;

/// Minimizes `f` over the constraint set starting from `x0`.
///
/// `x0` is projected onto the feasible set first; if the projection is outside
/// the open domain the solve fails with [`Error::Domain`] (status
/// `DomainBreach`).
pub fn minimize<O: Objective + ?Sized>(
    f: &O,
    x0: &DVector<f64>,
    cs: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<(DVector<f64>, SolveReport)> {
    let x = cs.project(x0)?;
    let fx = f.value(&x).ok_or_else(|| {
        Error::Domain("starting point is outside the objective's domain".into())
    })?;
    if cs.is_affine() {
        Ok(lbfgs(f, x, fx, cs, opts))
    } else {
        spg(f, x, fx, cs, opts)
    }
}

/// Maximizes `f`; the report carries the maximized value.
pub fn maximize<O: Objective + ?Sized>(
    f: &O,
    x0: &DVector<f64>,
    cs: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<(DVector<f64>, SolveReport)> {
    let (x, mut report) = minimize(&Negated(f), x0, cs, opts)?;
    report.objective = -report.objective;
    report.history.iter_mut().for_each(|v| *v = -*v);
    Ok((x, report))
}

/// Armijo test that refuses to pass on rounding alone: when the required
/// decrease is below the resolution of `fx` it never holds.
fn sufficient_decrease(fx: f64, ft: f64, directional: f64) -> bool {
    let target = fx + ARMIJO * directional;
    target < fx && ft <= target
}

/// Objective differences this small are rounding noise.
fn within_noise(fx: f64, ft: f64) -> bool {
    (ft - fx).abs() <= 16.0 * f64::EPSILON * fx.abs().max(ft.abs())
}

/// Armijo test on the trapezoid estimate `½(φ'(0) + φ'(1))` of the change
/// along the step, used once value differences are lost to rounding.
/// `slope` and `end_slope` are directional derivatives along the unscaled
/// direction at the start and end of the step.
fn trapezoid_decrease(slope: f64, end_slope: f64) -> bool {
    slope < 0.0 && end_slope <= (1.0 - 2.0 * ARMIJO) * slope.abs()
}

fn scaled(norm: f64, fx: f64) -> f64 {
    norm / fx.abs().max(1.0)
}

/// Projection of a gradient onto the subspace parallel to the affine set.
fn tangent(g: &DVector<f64>, cs: &ConstraintSet) -> DVector<f64> {
    match cs.budget {
        Some(_) => g.add_scalar(-g.mean()),
        None => g.clone(),
    }
}

fn lbfgs<O: Objective + ?Sized>(
    f: &O,
    mut x: DVector<f64>,
    mut fx: f64,
    cs: &ConstraintSet,
    opts: &SolverOptions,
) -> (DVector<f64>, SolveReport) {
    let mut g = tangent(&f.gradient(&x), cs);
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut history = vec![fx];
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if scaled(g.amax(), fx) < opts.tol {
            status = SolveStatus::Converged;
            break;
        }
        iterations += 1;
        let mut d = -two_loop(&g, &pairs);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            pairs.clear();
            d = -g.clone();
            slope = g.dot(&d);
        }
        let mut step = if pairs.is_empty() {
            (1.0 / g.norm()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let xt = &x + &d * step;
            if let Some(ft) = f.value(&xt) {
                if sufficient_decrease(fx, ft, step * slope)
                    || (within_noise(fx, ft) && trapezoid_decrease(slope, tangent(&f.gradient(&xt), cs).dot(&d)))
                {
                    accepted = Some((xt, ft));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            status = SolveStatus::Stalled;
            break;
        };
        let gn = tangent(&f.gradient(&xn), cs);
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 && sy > 1e-12 * s.norm() * y.norm() {
            pairs.push_back((s, y, 1.0 / sy));
            if pairs.len() > opts.memory {
                pairs.pop_front();
            }
        }
        x = xn;
        fx = fnew;
        g = gn;
        history.push(fx);
    }
    if status == SolveStatus::MaxIter && scaled(g.amax(), fx) < opts.tol {
        status = SolveStatus::Converged;
    }
    let report = SolveReport {
        iterations,
        grad_norm: scaled(g.amax(), fx),
        objective: fx,
        status,
        history,
    };
    (x, report)
}

fn two_loop(g: &DVector<f64>, pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&q);
        q -= y * a;
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        q *= s.dot(y) / y.dot(y);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q += s * (a - b);
    }
    q
}

fn spg<O: Objective + ?Sized>(
    f: &O,
    mut x: DVector<f64>,
    mut fx: f64,
    cs: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<(DVector<f64>, SolveReport)> {
    const LAMBDA_MIN: f64 = 1e-12;
    const LAMBDA_MAX: f64 = 1e12;
    let mut g = f.gradient(&x);
    let pg_norm = |x: &DVector<f64>, g: &DVector<f64>| -> Result<f64> {
        Ok((cs.project(&(x - g))? - x).amax())
    };
    let mut pg = pg_norm(&x, &g)?;
    let mut lambda = (1.0 / pg.max(1e-300)).clamp(LAMBDA_MIN, LAMBDA_MAX);
    let mut history = vec![fx];
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if scaled(pg, fx) < opts.tol {
            status = SolveStatus::Converged;
            break;
        }
        iterations += 1;
        let d = cs.project(&(&x - &g * lambda))? - &x;
        let slope = g.dot(&d);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let xt = &x + &d * step;
            if let Some(ft) = f.value(&xt) {
                if sufficient_decrease(fx, ft, step * slope)
                    || (within_noise(fx, ft) && trapezoid_decrease(slope, f.gradient(&xt).dot(&d)))
                {
                    accepted = Some((xt, ft));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            status = SolveStatus::Stalled;
            break;
        };
        let gn = f.gradient(&xn);
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        lambda = if sy > 0.0 {
            (s.dot(&s) / sy).clamp(LAMBDA_MIN, LAMBDA_MAX)
        } else {
            LAMBDA_MAX
        };
        x = xn;
        fx = fnew;
        g = gn;
        pg = pg_norm(&x, &g)?;
        history.push(fx);
    }
    if status != SolveStatus::Converged && scaled(pg, fx) < opts.tol {
        status = SolveStatus::Converged;
    }
    let report = SolveReport {
        iterations,
        grad_norm: scaled(pg, fx),
        objective: fx,
        status,
        history,
    };
    Ok((x, report))
}
