use nalgebra::DVector;

use crate::error::{Error, Result};

/// Feasible set for the convex engine.
///
/// Coordinates are the asset weights followed by `epigraph` auxiliary
/// variables. With one auxiliary `t`, every weight is bounded above by `t`
/// (`w_i ≤ t`), which turns `min max_i w_i + …` into a smooth program.
/// Box bounds and the budget apply to the weights only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    pub lower: Option<DVector<f64>>,
    pub upper: Option<DVector<f64>>,
    /// `Σ w = budget`
    pub budget: Option<f64>,
    pub nonneg: bool,
    /// Number of epigraph auxiliaries appended after the weights (0 or 1).
    pub epigraph: usize,
}

impl ConstraintSet {
    pub fn unconstrained() -> Self {
        Self::default()
    }

    /// `w ≥ 0`, `Σw = 1`.
    pub fn simplex() -> Self {
        Self {
            budget: Some(1.0),
            nonneg: true,
            ..Self::default()
        }
    }

    pub fn long_only() -> Self {
        Self {
            nonneg: true,
            ..Self::default()
        }
    }

    pub fn budget(total: f64) -> Self {
        Self {
            budget: Some(total),
            ..Self::default()
        }
    }

    pub fn with_bounds(mut self, lower: Option<DVector<f64>>, upper: Option<DVector<f64>>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_epigraph(mut self) -> Self {
        self.epigraph = 1;
        self
    }

    pub fn is_unconstrained(&self) -> bool {
        self.lower.is_none()
            && self.upper.is_none()
            && self.budget.is_none()
            && !self.nonneg
            && self.epigraph == 0
    }

    /// True when the feasible set is an affine subspace (projection is linear).
    pub fn is_affine(&self) -> bool {
        self.lower.is_none() && self.upper.is_none() && !self.nonneg && self.epigraph == 0
    }

    /// Effective per-coordinate bounds of the `n` weights.
    pub(crate) fn bounds(&self, n: usize) -> Result<(DVector<f64>, DVector<f64>)> {
        let mut lo = match &self.lower {
            Some(l) if l.len() != n => {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: l.len(),
                })
            }
            Some(l) => l.clone(),
            None => DVector::from_element(n, f64::NEG_INFINITY),
        };
        let hi = match &self.upper {
            Some(u) if u.len() != n => {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: u.len(),
                })
            }
            Some(u) => u.clone(),
            None => DVector::from_element(n, f64::INFINITY),
        };
        if self.nonneg {
            lo.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        if let Some(i) = (0..n).find(|&i| lo[i] > hi[i] || lo[i].is_nan() || hi[i].is_nan()) {
            return Err(Error::Infeasible(format!(
                "bounds of coordinate {i} are inconsistent ({} > {})",
                lo[i], hi[i]
            )));
        }
        if let Some(b) = self.budget {
            let (sl, su) = (lo.sum(), hi.sum());
            if !(sl <= b && b <= su) {
                return Err(Error::Infeasible(format!(
                    "budget {b} outside [{sl}, {su}] allowed by the bounds"
                )));
            }
        }
        if self.epigraph > 1 {
            return Err(Error::Infeasible(
                "at most one epigraph auxiliary is supported".into(),
            ));
        }
        Ok((lo, hi))
    }

    /// Euclidean projection onto the feasible set. `x` holds weights followed by
    /// the epigraph auxiliaries.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = x.len() - self.epigraph;
        let (lo, hi) = self.bounds(n)?;
        let w = x.rows(0, n).into_owned();
        if self.epigraph == 0 {
            return Ok(project_box_budget(&w, &lo, &hi, self.budget).0);
        }
        let (w, t) = project_epigraph(&w, x[n], &lo, &hi, self.budget)?;
        let mut out = DVector::zeros(n + 1);
        out.rows_mut(0, n).copy_from(&w);
        out[n] = t;
        Ok(out)
    }
}

/// Projection onto `{lo ≤ w ≤ hi, Σw = budget}` by bisection on the shift `τ`
/// in `w = clip(y − τ, lo, hi)`. Returns the projection and `τ` (0 without a
/// budget). Assumes the set is non-empty.
pub(crate) fn project_box_budget(
    y: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    budget: Option<f64>,
) -> (DVector<f64>, f64) {
    let clip = |tau: f64| DVector::from_fn(y.len(), |i, _| (y[i] - tau).clamp(lo[i], hi[i]));
    let Some(b) = budget else {
        return (clip(0.0), 0.0);
    };
    if lo.iter().all(|v| v.is_infinite()) && hi.iter().all(|v| v.is_infinite()) {
        let tau = (y.sum() - b) / y.len() as f64;
        return (y.add_scalar(-tau), tau);
    }
    // sum(clip(y - tau)) is nonincreasing in tau
    let span = y.iter().map(|v| v.abs()).fold(0.0, f64::max)
        + lo.iter().chain(hi.iter()).filter(|v| v.is_finite()).map(|v| v.abs()).fold(0.0, f64::max)
        + b.abs()
        + 1.0;
    let (mut a, mut c) = (-span, span);
    while clip(a).sum() < b {
        a *= 2.0;
    }
    while clip(c).sum() > b {
        c *= 2.0;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + c);
        if m <= a || m >= c {
            break;
        }
        if clip(m).sum() > b {
            a = m;
        } else {
            c = m;
        }
    }
    let tau = 0.5 * (a + c);
    let mut w = clip(tau);
    // absorb the last rounding residual in a coordinate with slack
    let resid = b - w.sum();
    if resid != 0.0 {
        if let Some(i) = (0..w.len()).find(|&i| {
            let v = w[i] + resid;
            v > lo[i] && v < hi[i]
        }) {
            w[i] += resid;
        }
    }
    (w, tau)
}

/// Projection of `(y, s)` onto `{(w, t): w in box/budget set, w_i ≤ t}`.
///
/// For fixed `t` the `w`-part is a box/budget projection with the upper bound
/// capped at `t`; the squared distance `D(t)` is convex, and its derivative
/// `2(t − s) − 2 Σ_{capped} (y_i − τ − t)` is found by bisection.
fn project_epigraph(
    y: &DVector<f64>,
    s: f64,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    budget: Option<f64>,
) -> Result<(DVector<f64>, f64)> {
    let n = y.len();
    let capped = |t: f64| DVector::from_fn(n, |i, _| hi[i].min(t));
    let mut t_min = lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if let Some(b) = budget {
        // need Σ min(hi_i, t) ≥ b
        let feasible = |t: f64| capped(t).sum() >= b;
        if !feasible(f64::INFINITY) {
            return Err(Error::Infeasible("epigraph budget unreachable".into()));
        }
        // Σ min(hi_i, t) < n·t, so no t below b/n works
        let mut a = b / n as f64;
        if !feasible(a) {
            let mut c = a.abs().max(1.0);
            while !feasible(c) {
                c *= 2.0;
            }
            for _ in 0..200 {
                let m = 0.5 * (a + c);
                if m <= a || m >= c {
                    break;
                }
                if feasible(m) {
                    c = m;
                } else {
                    a = m;
                }
            }
            a = c;
        }
        t_min = t_min.max(a);
    }
    let deriv = |t: f64| {
        let h = capped(t);
        let (_, tau) = project_box_budget(y, lo, &h, budget);
        let pull: f64 = (0..n)
            .filter(|&i| t <= hi[i] && y[i] - tau > t)
            .map(|i| y[i] - tau - t)
            .sum();
        (t - s) - pull
    };
    let unconstrained = project_box_budget(y, lo, hi, budget).0;
    let mut upper = s.max(unconstrained.max());
    if t_min.is_finite() {
        upper = upper.max(t_min);
    }
    let mut lower = if t_min.is_finite() {
        t_min
    } else {
        let mut a = s.min(y.min()) - 1.0;
        while deriv(a) > 0.0 {
            a -= 2.0 * (1.0 + a.abs());
        }
        a
    };
    let t = if deriv(lower) >= 0.0 {
        lower
    } else {
        let mut hi_t = upper;
        for _ in 0..200 {
            let m = 0.5 * (lower + hi_t);
            if m <= lower || m >= hi_t {
                break;
            }
            if deriv(m) > 0.0 {
                hi_t = m;
            } else {
                lower = m;
            }
        }
        0.5 * (lower + hi_t)
    };
    let w = project_box_budget(y, lo, &capped(t), budget).0;
    Ok((w, t))
}

/// Euclidean projection onto `{w ≥ 0, Σw = budget}` (sorted-threshold
/// algorithm), or onto the hyperplane `Σw = budget` when `nonneg` is false.
pub fn project_simplex(x: &DVector<f64>, budget: f64, nonneg: bool) -> DVector<f64> {
    let n = x.len();
    if !nonneg {
        let shift = (x.sum() - budget) / n as f64;
        return x.add_scalar(-shift);
    }
    let mut sorted: Vec<f64> = x.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - budget) / (k + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    x.map(|v| (v - theta).max(0.0))
}
