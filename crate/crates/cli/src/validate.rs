//! Closed-form versus Monte Carlo checks, deterministic consistency checks,
//! and a mutation probe on the scaling function.

use covalloc::block::{solve_model2, BlockStructure, Model2Spec};
use covalloc::distributions::{conditional_correlation_pdf, scaled_inv_chi2_pdf, RngStream, ShiftedGammaNoise, WishartNoiseModel};
use covalloc::oracle::{chunked_moments, grid_maximize, mc_expected_utility, MCConfig, NoiseModel};
use covalloc::quadrature::integrate;
use covalloc::scenario::{
    build_stressed_cov, low_a_limit_weights, lse_objective, minimax_portfolio, State, StressedCovSpec, TwoStateScenario,
};
use covalloc::solver::{minimize, ConstraintSet, FnObjective, SolverOptions};
use covalloc::univariate::{marginal_expected_utility, solve_cubic, UnivariateProblem};
use covalloc::wishart_alloc::{
    scaling_g_wishart, solve_weights_constrained, solve_weights_full, solve_weights_no_mu_uncertainty,
    WishartAllocProblem,
};
use covalloc::{gaussian_expected_utility, CovMatrix, PortfolioProblem, ReturnBeliefs, Weights};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::args::ValidateArgs;
use crate::output::{Cell, Table};
use crate::{CliError, CliResult, Common};

/// Largest tolerated `|z|` for a Monte Carlo check.
pub const Z_MAX: f64 = 3.0;
/// Relative bias applied to `g` by the mutation probe.
pub const MUTATION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub analytic: f64,
    pub estimate: f64,
    /// Standard error for Monte Carlo checks.
    pub se: Option<f64>,
    pub pass: bool,
}

impl Check {
    fn mc(name: impl Into<String>, analytic: f64, mean: f64, se: f64) -> Self {
        let mut c = Self {
            name: name.into(),
            analytic,
            estimate: mean,
            se: Some(se),
            pass: false,
        };
        c.pass = c.z().is_some_and(|z| z.abs() <= Z_MAX);
        c
    }

    fn exact(name: impl Into<String>, expected: f64, got: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            analytic: expected,
            estimate: got,
            se: None,
            pass: (got - expected).abs() <= tol,
        }
    }

    /// `(estimate − analytic)/se`; zero when both agree exactly with zero spread.
    pub fn z(&self) -> Option<f64> {
        let se = self.se?;
        let diff = self.estimate - self.analytic;
        Some(if diff == 0.0 { 0.0 } else { diff / se })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Relative bias on `g` (0 for an honest run).
    pub g_bias: f64,
}

fn tight() -> SolverOptions {
    SolverOptions::default().with_tol(1e-14).with_max_iter(50_000)
}

fn two_asset_problem(sigma0: [f64; 2]) -> CliResult<PortfolioProblem> {
    Ok(PortfolioProblem::new(
        ReturnBeliefs::new(DVector::from_vec(vec![0.06, 0.04]), DVector::from_vec(sigma0.to_vec()))?,
        CovMatrix::from_rows(&[vec![0.04, 0.012], vec![0.012, 0.0625]])?,
        2.0,
    )?)
}

fn weights(x: &[f64]) -> CliResult<Weights> {
    Ok(Weights::from_slice(x)?)
}

pub fn run_checks(cfg: &ValidateConfig) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    mc_checks(cfg, &mut out)?;
    deterministic_checks(cfg, &mut out)?;
    let mutated = ValidateConfig {
        g_bias: cfg.g_bias + MUTATION,
        ..*cfg
    };
    let mut probe = optimal_eu_check(&mutated)?;
    probe.name = "g_mutation_detected".into();
    probe.pass = probe.z().is_some_and(|z| z.abs() > Z_MAX);
    out.push(probe);
    Ok(out)
}

fn mc_checks(cfg: &ValidateConfig, out: &mut Vec<Check>) -> CliResult<()> {
    let n = cfg.n_samples;
    let seed = |k: u64| cfg.seed.wrapping_add(k);

    // near-zero Wishart noise reproduces the Gaussian expected utility
    let p = two_asset_problem([0.0, 0.0])?;
    let w = weights(&[0.7, 0.4])?;
    let exact = gaussian_expected_utility(&p, &w)?.value();
    let est = mc_expected_utility(&p, &NoiseModel::Wishart { alpha: 1e12 }, &w, &MCConfig::new(n, seed(1)))?;
    out.push(Check::mc("gaussian_eu_zero_noise", exact, est.mean, est.se));

    for k in 0..10 {
        out.push(wishart_mgf_check(k, n, seed(100 + k))?);
    }

    let wp = WishartAllocProblem::new(two_asset_problem([0.0, 0.0])?, 50.0)?;
    let exact = -(-2.0 * wp.marginalized_objective(&w)?).exp();
    let est = mc_expected_utility(&wp.problem, &NoiseModel::Wishart { alpha: 50.0 }, &w, &MCConfig::new(n, seed(2)))?;
    out.push(Check::mc("wishart_marginal_eu", exact, est.mean, est.se));

    out.push(optimal_eu_check(cfg)?);

    let up = UnivariateProblem::new(0.05, 0.0025, 0.0225, 0.01, 20.0, 2.0)?;
    let uw = solve_cubic(&up)?;
    let problem = PortfolioProblem::new(
        ReturnBeliefs::new(DVector::from_vec(vec![up.mu0]), DVector::from_vec(vec![up.sigma0_sq]))?,
        CovMatrix::diagonal(&[1.0])?,
        up.a,
    )?;
    let noise = NoiseModel::ShiftedGamma(ShiftedGammaNoise::new(up.alpha, up.sigma_sq, up.sigma_min_sq)?);
    let est = mc_expected_utility(&problem, &noise, &weights(&[uw])?, &MCConfig::new(n, seed(3)))?;
    out.push(Check::mc("univariate_marginal_eu", marginal_expected_utility(&up, uw)?.value(), est.mean, est.se));

    let sc = two_state(0.9, 3.0)?;
    let x = weights(&[0.5, 0.3])?;
    let exact = -lse_objective(&sc, &x)?.exp();
    let problem = PortfolioProblem::new(ReturnBeliefs::certain(sc.normal.mu.clone()), sc.normal.sigma.clone(), sc.a)?;
    let noise = NoiseModel::TwoState {
        p: sc.p,
        normal: (sc.normal.mu.clone(), sc.normal.sigma.clone()),
        stressed: (sc.stressed.mu.clone(), sc.stressed.sigma.clone()),
    };
    let est = mc_expected_utility(&problem, &noise, &x, &MCConfig::new(n, seed(4)))?;
    out.push(Check::mc("two_state_lse_eu", exact, est.mean, est.se));

    for (k, alpha) in [10.0, 100.0, 1000.0].into_iter().enumerate() {
        let g = ShiftedGammaNoise::new(alpha, 0.0225, 0.01)?;
        let (mean, se, _, _) = chunked_moments(n, seed(200 + k as u64), |rng| g.sample_one(rng));
        out.push(Check::mc(format!("shifted_gamma_mean_alpha_{alpha}"), g.mean(), mean, se));
    }
    Ok(())
}

/// Random instance `k` of `E exp(½a²wᵀSw)`. The ratio `u = (a²/α)wᵀΣw` is
/// `0.02(k+1)` capped at `1/√α`: the integrand's relative variance is
/// `(1 + u²/(1−2u))^(α/2) − 1`, which explodes for large `α` at fixed `u`.
fn wishart_mgf_check(k: u64, n: usize, seed: u64) -> CliResult<Check> {
    let mut rng = RngStream::with_stream(seed, 0);
    let dim = 1 + (k % 3) as usize;
    let b = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-0.3..0.3));
    let sigma = CovMatrix::new(&b * b.transpose() + DMatrix::identity(dim, dim) * 0.02)?;
    let alpha: f64 = [3.0, 8.0, 20.0, 50.0, 200.0][(k % 5) as usize];
    let a = rng.random_range(0.5..3.0);
    let raw = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    let ratio = (0.02 * (k + 1) as f64).min(alpha.sqrt().recip());
    let w = &raw * (ratio * alpha / (a * a * sigma.quad_form(&raw))).sqrt();
    let model = WishartNoiseModel::new(alpha, sigma)?;
    let sampler = model.sampler()?;
    let exact = model.mgf(&w, a)?;
    let (mean, se, _, _) = chunked_moments(n, seed, |r| {
        let s = sampler.draw(r);
        (0.5 * a * a * w.dot(&(&s * &w))).exp()
    });
    Ok(Check::mc(format!("wishart_mgf_{}", k + 1), exact, mean, se))
}

/// Expected utility at `w = (g/a)Σ⁻¹μ`. At the optimum `1 − g²q/α = g`, so
/// `E U = −exp(−gq − (α/2) ln g)`; any bias in `g` breaks the identity.
fn optimal_eu_check(cfg: &ValidateConfig) -> CliResult<Check> {
    let (alpha, a) = (10.0, 2.0);
    let problem = PortfolioProblem::new(
        ReturnBeliefs::certain(DVector::from_vec(vec![0.6, 0.4])),
        CovMatrix::from_rows(&[vec![0.2, 0.05], vec![0.05, 0.25]])?,
        a,
    )?;
    let mv = problem.sigma().solve(problem.mu0())?;
    let q = problem.mu0().dot(&mv);
    let g = scaling_g_wishart(q, alpha)? * (1.0 + cfg.g_bias);
    let w = Weights::new(&mv * (g / a))?;
    let exact = -(-g * q - 0.5 * alpha * g.ln()).exp();
    let est = mc_expected_utility(
        &problem,
        &NoiseModel::Wishart { alpha },
        &w,
        &MCConfig::new(cfg.n_samples, cfg.seed.wrapping_add(5)),
    )?;
    Ok(Check::mc("wishart_optimal_eu", exact, est.mean, est.se))
}

fn two_state(p: f64, a: f64) -> CliResult<TwoStateScenario> {
    let normal = State::new(
        DVector::from_vec(vec![0.06, 0.04]),
        CovMatrix::from_rows(&[vec![0.04, 0.006], vec![0.006, 0.0225]])?,
    )?;
    let stressed = State::new(
        DVector::from_vec(vec![-0.25, -0.1]),
        build_stressed_cov(&StressedCovSpec::new(0.45, 0.8, 2)?)?,
    )?;
    Ok(TwoStateScenario::new(p, normal, stressed, a)?)
}

fn deterministic_checks(cfg: &ValidateConfig, out: &mut Vec<Check>) -> CliResult<()> {
    let mut rng = RngStream::with_stream(cfg.seed, 1);

    // unconstrained Gaussian EU maximizer against Σ⁻¹μ/a
    let mut worst: f64 = 0.0;
    for dim in 2..=10 {
        let b = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-0.3..0.3));
        let sigma = CovMatrix::new(&b * b.transpose() + DMatrix::identity(dim, dim) * 0.05)?;
        let mu = DVector::from_fn(dim, |_, _| rng.random_range(-0.1..0.1));
        let a = rng.random_range(0.5..10.0);
        let problem = PortfolioProblem::new(ReturnBeliefs::certain(mu), sigma, a)?;
        let f = FnObjective {
            value: |x: &DVector<f64>| {
                let w = Weights::new(x.clone()).ok()?;
                gaussian_expected_utility(&problem, &w).ok().map(|v| v.log_magnitude)
            },
            gradient: |x: &DVector<f64>| problem.sigma().matrix() * x * (a * a) - problem.mu0() * a,
        };
        let (w, report) = minimize(&f, &DVector::zeros(dim), &ConstraintSet::unconstrained(), &tight())?;
        report.ensure_stationary(1e-12)?;
        let mv = problem.mv_weights()?;
        worst = worst.max((&w - mv.as_vector()).norm() / mv.as_vector().norm());
    }
    out.push(Check::exact("mv_recovery_rel_err", 0.0, worst, 1e-8));

    // scaling function against the numeric maximizer of a 1-D reduction
    let qs = [0.01, 0.1, 1.0, 10.0, 100.0];
    let alphas = [1.0, 10.0, 100.0, 1000.0];
    let mut worst: f64 = 0.0;
    let mut shape_violations = 0usize;
    let mut table = vec![vec![0.0; alphas.len()]; qs.len()];
    for (i, &q) in qs.iter().enumerate() {
        for (j, &alpha) in alphas.iter().enumerate() {
            let g = scaling_g_wishart(q, alpha)? * (1.0 + cfg.g_bias);
            let p = WishartAllocProblem::new(
                PortfolioProblem::new(ReturnBeliefs::certain(DVector::from_vec(vec![q.sqrt()])), CovMatrix::diagonal(&[1.0])?, 1.0)?,
                alpha,
            )?;
            let (w, _) = solve_weights_constrained(&p, &ConstraintSet::unconstrained(), &tight())?;
            worst = worst.max((w.as_vector()[0] / q.sqrt() - g).abs());
            if !(g > 0.0 && g <= 1.0) {
                shape_violations += 1;
            }
            table[i][j] = g;
        }
    }
    for i in 0..qs.len() {
        for j in 0..alphas.len() {
            if i + 1 < qs.len() && table[i + 1][j] >= table[i][j] {
                shape_violations += 1;
            }
            if j + 1 < alphas.len() && table[i][j + 1] <= table[i][j] {
                shape_violations += 1;
            }
        }
    }
    out.push(Check::exact("scaling_g_vs_numeric", 0.0, worst, 1e-6));
    out.push(Check::exact("scaling_g_shape_violations", 0.0, shape_violations as f64, 0.0));

    // g and the weight direction do not depend on a
    let solve_at = |a: f64| -> CliResult<(Weights, f64)> {
        let problem = PortfolioProblem::new(
            ReturnBeliefs::certain(DVector::from_vec(vec![0.06, 0.04])),
            CovMatrix::from_rows(&[vec![0.04, 0.012], vec![0.012, 0.0625]])?,
            a,
        )?;
        let (w, d) = solve_weights_no_mu_uncertainty(&WishartAllocProblem::new(problem, 5.0)?)?;
        Ok((w, d.g))
    };
    let (w1, g1) = solve_at(1.0)?;
    let (mut dg, mut dw): (f64, f64) = (0.0, 0.0);
    for a in [0.5, 5.0] {
        let (w, g) = solve_at(a)?;
        dg = dg.max((g - g1).abs());
        dw = dw.max((w.as_vector() * a - w1.as_vector()).amax() / w1.as_vector().amax());
    }
    out.push(Check::exact("risk_aversion_invariance_g", 0.0, dg, 1e-12));
    out.push(Check::exact("risk_aversion_invariance_direction", 0.0, dw, 1e-12));

    // cubic root against a refined grid search
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p = UnivariateProblem::new(
            rng.random_range(-0.1..0.1),
            rng.random_range(0.0..0.01),
            rng.random_range(0.005..0.1),
            rng.random_range(0.0..0.02),
            rng.random_range(2.0..500.0),
            rng.random_range(0.5..5.0),
        )?;
        let edge = 0.999_999 * p.max_weight();
        let (x, _) = grid_maximize(
            |w| marginal_expected_utility(&p, w[0]).ok().map(|v| -v.log_magnitude),
            &[(-edge, edge)],
            4001,
        )?;
        worst = worst.max((solve_cubic(&p)? - x[0]).abs());
    }
    out.push(Check::exact("univariate_cubic_vs_grid", 0.0, worst, 1e-8));

    // fixed point with Σ₀ = 0 and with α → ∞
    let wp = WishartAllocProblem::new(two_asset_problem([0.0, 0.0])?, 7.0)?;
    let diff = (solve_weights_full(&wp)?.0.as_vector() - solve_weights_no_mu_uncertainty(&wp)?.0.as_vector()).amax();
    out.push(Check::exact("fixed_point_no_mu_uncertainty", 0.0, diff, 1e-10));
    let problem = two_asset_problem([0.002, 0.001])?;
    let total = CovMatrix::new(problem.sigma().matrix() + problem.beliefs().sigma0())?;
    let shrunk = total.solve(problem.mu0())? / problem.risk_aversion();
    let wp = WishartAllocProblem::new(problem, 1e12)?;
    let diff = (solve_weights_full(&wp)?.0.as_vector() - shrunk).amax();
    out.push(Check::exact("fixed_point_large_alpha", 0.0, diff, 1e-6));

    // Model 2 reduced and full solves
    let st = BlockStructure::contiguous(&[3, 4, 2])?;
    let spec = Model2Spec::new(
        st.clone(),
        0.005,
        0.04,
        20.0,
        DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.1, 0.2, 0.3, 0.15, 0.1, 0.15, 0.6]),
    )?;
    let beliefs = ReturnBeliefs::new(
        st.expand(&DVector::from_vec(vec![0.05, 0.03, 0.04])),
        st.expand(&DVector::from_vec(vec![0.001, 0.0, 0.002])),
    )?;
    let cs = ConstraintSet::unconstrained();
    let full = solve_model2(&spec, &beliefs, 2.0, &cs, false, &tight())?;
    let red = solve_model2(&spec, &beliefs, 2.0, &cs, true, &tight())?;
    let diff = (full.weights.as_vector() - red.weights.as_vector()).amax();
    out.push(Check::exact("block2_reduced_vs_full", 0.0, diff, 1e-8));

    // LSE sandwich bounds
    let mut violations = 0usize;
    for _ in 0..10_000 {
        let sc = two_state(rng.random_range(0.01..0.99), rng.random_range(0.1..50.0))?;
        let x = weights(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])?;
        let f = lse_objective(&sc, &x)?;
        let (un, us) = sc.state_terms(x.as_vector());
        let m = un.max(us);
        if !(m <= f && f <= m + std::f64::consts::LN_2) {
            violations += 1;
        }
    }
    out.push(Check::exact("lse_sandwich_violations", 0.0, violations as f64, 0.0));

    // 1-D small-a limit
    let a = 1e-3;
    let sc = TwoStateScenario::new(
        0.9,
        State::new(DVector::from_vec(vec![0.06]), CovMatrix::diagonal(&[0.0225])?)?,
        State::new(DVector::from_vec(vec![-0.3]), CovMatrix::diagonal(&[0.2025])?)?,
        a,
    )?;
    let expected = 0.024 / (a * 0.052164);
    out.push(Check::exact(
        "two_state_1d_limit_formula",
        expected,
        low_a_limit_weights(&sc)?.as_vector()[0],
        1e-12 * expected,
    ));

    let sigma = CovMatrix::from_rows(&[vec![0.04, 0.01, 0.0], vec![0.01, 0.09, 0.02], vec![0.0, 0.02, 0.16]])?;
    let (w, _) = minimax_portfolio(&sigma, 0.0, &tight())?;
    let spread = w.as_vector().iter().map(|v| (v - 1.0 / 3.0).abs()).fold(0.0, f64::max);
    out.push(Check::exact("minimax_b0_uniform", 0.0, spread, 1e-9));

    let s2 = 0.15f64 * 0.15;
    let mass = integrate(|x| scaled_inv_chi2_pdf(x, 20, s2).unwrap_or(f64::NAN), 1e-12, 100.0 * s2, 1e-12);
    out.push(Check::exact("inv_chi2_pdf_mass", 1.0, mass, 1e-6));
    let mass = integrate(
        |rho| conditional_correlation_pdf(rho, 0.8, 20).unwrap_or(f64::NAN),
        -1.0 + 1e-12,
        1.0 - 1e-12,
        1e-12,
    );
    out.push(Check::exact("correlation_pdf_mass", 1.0, mass, 1e-5));
    Ok(())
}

pub fn run(common: &Common, args: &ValidateArgs) -> CliResult<()> {
    if args.n_samples < 2 {
        return Err(crate::input_error("--n-samples must be at least 2"));
    }
    let checks = run_checks(&ValidateConfig {
        n_samples: args.n_samples,
        seed: common.seed,
        g_bias: args.g_bias,
    })?;
    let mut table = Table::create(
        common.out.as_deref(),
        &["check", "analytic", "mc_estimate", "mc_se", "z_score", "pass"],
    )?;
    for c in &checks {
        table.row(&[
            c.name.as_str().into(),
            c.analytic.into(),
            c.estimate.into(),
            c.se.into(),
            c.z().into(),
            Cell::Text(c.pass.to_string()),
        ])?;
    }
    table.finish()?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        for c in checks.iter().filter(|c| !c.pass) {
            log::error!("check {} failed", c.name);
        }
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}
