//! Independent reference computations: Monte Carlo estimates of marginalized
//! expected utility and a brute-force grid maximizer.
//!
//! Nothing here calls into the allocators; the closed forms are checked
//! against these estimates, never the other way round.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::distributions::{RngStream, ShiftedGammaNoise, WishartNoiseModel};
use crate::error::{invalid, Error, Result};
use crate::types::{CovMatrix, PortfolioProblem, Weights};

/// Samples handled by one RNG sub-stream. Fixed so that estimates do not
/// depend on the number of worker threads.
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MCConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Pair each expected-return draw `μ₀ + Lz` with `μ₀ − Lz`.
    pub antithetic: bool,
}

impl Default for MCConfig {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            seed: 20_240_601,
            antithetic: false,
        }
    }
}

impl MCConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            antithetic: false,
        }
    }
}

/// Random covariance model used by the estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// `S ~ W(α, Σ/α)` with `Σ` the problem covariance.
    Wishart { alpha: f64 },
    /// `S = s² R` with `s²` shifted-gamma and `R` the problem covariance
    /// (a correlation matrix, or `[[1]]` for a single asset).
    ShiftedGamma(ShiftedGammaNoise),
    /// Normal state with probability `p`, stressed state otherwise; the states'
    /// `(μ, Σ)` replace the problem's beliefs.
    TwoState {
        p: f64,
        normal: (DVector<f64>, CovMatrix),
        stressed: (DVector<f64>, CovMatrix),
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    /// Set when the integrand is outside its integrability region or the
    /// estimate is dominated by a single draw.
    pub divergence_warning: bool,
}

impl MCEstimate {
    /// `(analytic − mean) / se`
    pub fn z_score(&self, analytic: f64) -> f64 {
        (analytic - self.mean) / self.se
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    max_abs: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        self.max_abs = self.max_abs.max(x.abs());
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64) * (o.n as f64) / n as f64,
            max_abs: self.max_abs.max(o.max_abs),
        }
    }

    fn estimate(&self, domain_ok: bool) -> MCEstimate {
        let var = if self.n > 1 {
            self.m2 / (self.n as f64 - 1.0)
        } else {
            f64::INFINITY
        };
        let total = self.mean.abs() * self.n as f64;
        let dominated = total > 0.0 && self.max_abs > 0.5 * total;
        MCEstimate {
            mean: self.mean,
            se: (var / self.n as f64).sqrt(),
            n: self.n,
            divergence_warning: !domain_ok || dominated || !self.mean.is_finite(),
        }
    }
}

/// Runs `per_sample(rng)` `n` times over fixed-size chunks on independent
/// sub-streams and merges the moments in chunk order.
pub fn chunked_moments<F>(n: usize, seed: u64, per_sample: F) -> (f64, f64, usize, f64)
where
    F: Fn(&mut RngStream) -> f64 + Sync,
{
    let m = chunked(n, seed, &per_sample);
    let est = m.estimate(true);
    (est.mean, est.se, est.n, m.max_abs)
}

fn chunked<F>(n: usize, seed: u64, per_sample: &F) -> Moments
where
    F: Fn(&mut RngStream) -> f64 + Sync,
{
    let root = RngStream::new(seed);
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = root.substream(k as u64);
            let len = CHUNK.min(n - k * CHUNK);
            let mut m = Moments::default();
            for _ in 0..len {
                m.push(per_sample(&mut rng));
            }
            m
        })
        .collect();
    parts.into_iter().fold(Moments::default(), Moments::merge)
}

enum CovDraw {
    Wishart(crate::distributions::WishartSampler),
    Gamma(ShiftedGammaNoise, DMatrix<f64>),
}

impl CovDraw {
    fn quad(&self, w: &DVector<f64>, rng: &mut RngStream) -> f64 {
        match self {
            CovDraw::Wishart(s) => {
                let m = s.draw(rng);
                w.dot(&(&m * w))
            }
            CovDraw::Gamma(g, r) => g.sample_one(rng) * w.dot(&(r * w)),
        }
    }
}

/// Monte Carlo estimate of the marginalized expected utility
/// `E_{S,μ}[−exp(½a² wᵀSw − aμᵀw)]`.
///
/// The innermost integral over portfolio returns is always done analytically
/// (the Gaussian kernel above); only covariance and expected-return levels are
/// sampled.
pub fn mc_expected_utility(
    problem: &PortfolioProblem,
    noise: &NoiseModel,
    w: &Weights,
    cfg: &MCConfig,
) -> Result<MCEstimate> {
    problem.check_weights(w)?;
    check_config(cfg)?;
    let a = problem.risk_aversion();
    let v = w.as_vector().clone();
    match noise {
        NoiseModel::TwoState {
            p,
            normal,
            stressed,
        } => {
            let bern = Bernoulli::new(*p).map_err(|_| invalid("p", "must lie in [0, 1]"))?;
            let un = 0.5 * a * a * normal.1.quad_form(&v) - a * normal.0.dot(&v);
            let us = 0.5 * a * a * stressed.1.quad_form(&v) - a * stressed.0.dot(&v);
            let m = chunked(cfg.n_samples, cfg.seed, &|rng: &mut RngStream| {
                if bern.sample(rng) {
                    -un.exp()
                } else {
                    -us.exp()
                }
            });
            Ok(m.estimate(true))
        }
        _ => {
            let (draw, domain_ok) = cov_draw(problem, noise, &v, a)?;
            let mu0 = problem.mu0().clone();
            let sd0 = problem.beliefs().sigma0_diag().map(f64::sqrt);
            let mu_uncertain = problem.beliefs().has_mu_uncertainty();
            let antithetic = cfg.antithetic && mu_uncertain;
            let m = chunked(cfg.n_samples, cfg.seed, &|rng: &mut RngStream| {
                let risk = 0.5 * a * a * draw.quad(&v, rng);
                if !mu_uncertain {
                    return -(risk - a * mu0.dot(&v)).exp();
                }
                let z = DVector::from_fn(mu0.len(), |_, _| StandardNormal.sample(rng));
                let shift = z.component_mul(&sd0).dot(&v);
                let base = mu0.dot(&v);
                if antithetic {
                    -0.5 * ((risk - a * (base + shift)).exp() + (risk - a * (base - shift)).exp())
                } else {
                    -(risk - a * (base + shift)).exp()
                }
            });
            Ok(m.estimate(domain_ok))
        }
    }
}

/// Plain three-level estimator: draws `S`, `μ` and the portfolio return
/// `x ~ N(μᵀw, wᵀSw)` and averages `−exp(−a x)`. Kept as the baseline the
/// analytic inner integral is compared against.
pub fn mc_expected_utility_naive(
    problem: &PortfolioProblem,
    noise: &NoiseModel,
    w: &Weights,
    cfg: &MCConfig,
) -> Result<MCEstimate> {
    problem.check_weights(w)?;
    check_config(cfg)?;
    if matches!(noise, NoiseModel::TwoState { .. }) {
        return Err(invalid("noise", "naive estimator covers covariance noise models only"));
    }
    let a = problem.risk_aversion();
    let v = w.as_vector().clone();
    let (draw, domain_ok) = cov_draw(problem, noise, &v, a)?;
    let mu0 = problem.mu0().clone();
    let sd0 = problem.beliefs().sigma0_diag().map(f64::sqrt);
    let m = chunked(cfg.n_samples, cfg.seed, &|rng: &mut RngStream| {
        let var = draw.quad(&v, rng);
        let z = DVector::from_fn(mu0.len(), |_, _| StandardNormal.sample(rng));
        let mean = mu0.dot(&v) + z.component_mul(&sd0).dot(&v);
        let e: f64 = StandardNormal.sample(rng);
        let x = mean + var.sqrt() * e;
        -(-a * x).exp()
    });
    Ok(m.estimate(domain_ok))
}

fn check_config(cfg: &MCConfig) -> Result<()> {
    if cfg.n_samples < 2 {
        return Err(invalid("n_samples", "need at least two samples"));
    }
    Ok(())
}

fn cov_draw(
    problem: &PortfolioProblem,
    noise: &NoiseModel,
    v: &DVector<f64>,
    a: f64,
) -> Result<(CovDraw, bool)> {
    match noise {
        NoiseModel::Wishart { alpha } => {
            let model = WishartNoiseModel::new(*alpha, problem.sigma().clone())?;
            let ok = model.log_mgf(v, a).is_ok();
            Ok((CovDraw::Wishart(model.sampler()?), ok))
        }
        NoiseModel::ShiftedGamma(g) => {
            let r = problem.sigma().matrix().clone();
            let t = 0.5 * a * a * v.dot(&(&r * v));
            let ok = g.log_mgf(t).is_ok();
            Ok((CovDraw::Gamma(*g, r), ok))
        }
        NoiseModel::TwoState { .. } => unreachable!("handled by caller"),
    }
}

/// Dense grid scan over a box followed by coordinate-wise refinement
/// (golden section, then bisection on a central-difference slope).
///
/// `objective` returns `None` outside its domain. Intended for `dim ≤ 3`.
pub fn grid_maximize<F>(objective: F, bounds: &[(f64, f64)], resolution: usize) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let dim = bounds.len();
    if dim == 0 || resolution < 2 {
        return Err(invalid("bounds", "need at least one dimension and two grid points"));
    }
    let steps: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| (hi - lo) / (resolution - 1) as f64)
        .collect();
    let total = resolution.checked_pow(dim as u32).ok_or_else(|| invalid("resolution", "grid too large"))?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut x = vec![0.0; dim];
    for idx in 0..total {
        let mut rem = idx;
        for d in 0..dim {
            x[d] = bounds[d].0 + (rem % resolution) as f64 * steps[d];
            rem /= resolution;
        }
        if let Some(v) = objective(&x) {
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((x.clone(), v));
            }
        }
    }
    let (mut x, mut fx) = best.ok_or_else(|| Error::Domain("objective undefined on the whole grid".into()))?;
    for _ in 0..5000 {
        let prev = x.clone();
        for d in 0..dim {
            let lo = (x[d] - steps[d]).max(bounds[d].0);
            let hi = (x[d] + steps[d]).min(bounds[d].1);
            let line = |t: f64| {
                let mut y = x.clone();
                y[d] = t;
                objective(&y)
            };
            let t = refine_1d(&line, lo, hi, steps[d]);
            if let Some(v) = line(t) {
                if v >= fx {
                    x[d] = t;
                    fx = v;
                }
            }
        }
        let moved = x
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if moved < 1e-14 {
            break;
        }
    }
    Ok((x, fx))
}

fn refine_1d<F: Fn(f64) -> Option<f64>>(f: &F, lo: f64, hi: f64, step: f64) -> f64 {
    let g = |t: f64| f(t).unwrap_or(f64::NEG_INFINITY);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..200 {
        if b - a < 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = g(d);
        }
    }
    let mut x = 0.5 * (a + b);
    // golden section stalls at ~sqrt(eps); finish on the sign of the slope
    let h = 1e-3 * step;
    let slope = |t: f64| (g(t + h) - g(t - h)) / (2.0 * h);
    let w = 1e-5 * step;
    let (mut l, mut r) = ((x - w).max(lo), (x + w).min(hi));
    let (sl, sr) = (slope(l), slope(r));
    if sl.is_finite() && sr.is_finite() && sl > 0.0 && sr < 0.0 {
        for _ in 0..200 {
            let m = 0.5 * (l + r);
            if m <= l || m >= r {
                break;
            }
            if slope(m) > 0.0 {
                l = m;
            } else {
                r = m;
            }
        }
        x = 0.5 * (l + r);
    }
    x
}
