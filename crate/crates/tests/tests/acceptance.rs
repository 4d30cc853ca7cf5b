//! Acceptance criteria, one test each.

use std::fs;

use covalloc::block::{solve_model1, solve_model2, BlockStructure, Model1Block, Model1Spec, Model2Spec};
use covalloc::distributions::{
    conditional_correlation_pdf, scaled_inv_chi2_mean, scaled_inv_chi2_pdf, scaled_inv_chi2_variance, RngStream,
    WishartNoiseModel,
};
use covalloc::oracle::{chunked_moments, grid_maximize};
use covalloc::quadrature::integrate;
use covalloc::scenario::{
    build_stressed_cov, low_a_limit_weights, lse_objective, minimax_objective, minimax_portfolio, solve_two_state, State,
    StressedCovSpec, TwoStateScenario,
};
use covalloc::solver::{minimize, ConstraintSet, FnObjective, SolverOptions};
use covalloc::univariate::{asymptotic_weight, marginal_expected_utility, solve_cubic, Regime, UnivariateProblem};
use covalloc::wishart_alloc::{
    scaling_g_wishart, solve_weights_constrained, solve_weights_full, solve_weights_no_mu_uncertainty,
    WishartAllocProblem,
};
use covalloc::{gaussian_expected_utility, CovMatrix, PortfolioProblem, ReturnBeliefs, Weights};
use nalgebra::{DMatrix, DVector};
use covalloc_tests::report;
use rand::Rng;
use tempfile::TempDir;

fn tight() -> SolverOptions {
    SolverOptions::default().with_tol(1e-14).with_max_iter(50_000)
}

fn random_cov(rng: &mut RngStream, dim: usize, ridge: f64) -> CovMatrix {
    let b = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-0.3..0.3));
    CovMatrix::new(&b * b.transpose() + DMatrix::identity(dim, dim) * ridge).unwrap()
}

#[test]
fn criterion_01_mean_variance_recovery() {
    let mut rng = RngStream::new(1);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let dim = 2 + k % 9;
        let sigma = random_cov(&mut rng, dim, 0.05);
        let mu = DVector::from_fn(dim, |_, _| rng.random_range(-0.1..0.1));
        let a = rng.random_range(0.5..10.0);
        let problem = PortfolioProblem::new(ReturnBeliefs::certain(mu), sigma, a).unwrap();
        let f = FnObjective {
            value: |x: &DVector<f64>| {
                gaussian_expected_utility(&problem, &Weights::new(x.clone()).ok()?).ok().map(|v| v.log_magnitude)
            },
            gradient: |x: &DVector<f64>| problem.sigma().matrix() * x * (a * a) - problem.mu0() * a,
        };
        let (w, report) = minimize(&f, &DVector::zeros(dim), &ConstraintSet::unconstrained(), &tight()).unwrap();
        report.ensure_stationary(1e-12).unwrap();
        // Σ⁻¹μ/a by LU, independent of the library's solver
        let mv = problem.sigma().matrix().clone().lu().solve(problem.mu0()).unwrap() / a;
        worst = worst.max((&w - &mv).norm() / mv.norm());
    }
    report(1, "MV recovery", &[(format!("max rel err {worst:.2e} over 50 instances, dims 2-10"), worst <= 1e-8)]);
}

#[test]
fn criterion_02_wishart_mgf_identity() {
    let mut checks = Vec::new();
    let mut worst_z: f64 = 0.0;
    let mut max_ratio: f64 = 0.0;
    for k in 0..10u64 {
        let mut rng = RngStream::with_stream(1000 + k, 0);
        let dim = 1 + (k % 3) as usize;
        let sigma = random_cov(&mut rng, dim, 0.02);
        let alpha: f64 = [4.0, 10.0, 30.0, 80.0][(k % 4) as usize];
        let a = rng.random_range(0.5..3.0);
        let raw = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        // keep the integrand's relative variance bounded
        let ratio = (0.03 * (k + 1) as f64).min(alpha.sqrt().recip());
        max_ratio = max_ratio.max(ratio);
        let w = &raw * (ratio * alpha / (a * a * sigma.quad_form(&raw))).sqrt();
        let model = WishartNoiseModel::new(alpha, sigma).unwrap();
        let sampler = model.sampler().unwrap();
        let exact = (1.0 - ratio).powf(-alpha / 2.0);
        assert!((model.mgf(&w, a).unwrap() / exact - 1.0).abs() < 1e-12);
        let (mean, se, _, _) = chunked_moments(100_000, 500 + k, |r| (0.5 * a * a * w.dot(&(&sampler.draw(r) * &w))).exp());
        let z = (mean - exact) / se;
        worst_z = worst_z.max(z.abs());
        checks.push((format!("instance {} z={z:.2}", k + 1), z.abs() <= 3.0));
    }
    checks.insert(0, (format!("max |z| {worst_z:.2}, max ratio {max_ratio:.3}"), max_ratio <= 0.5));
    report(2, "Wishart mgf identity", &checks);
}

#[test]
fn criterion_03_scaling_function() {
    let qs = [0.01, 0.1, 1.0, 10.0, 100.0];
    let alphas = [1.0, 10.0, 100.0, 1000.0];
    let mut g = vec![vec![0.0; alphas.len()]; qs.len()];
    let mut worst: f64 = 0.0;
    for (i, &q) in qs.iter().enumerate() {
        for (j, &alpha) in alphas.iter().enumerate() {
            g[i][j] = scaling_g_wishart(q, alpha).unwrap();
            let p = WishartAllocProblem::new(
                PortfolioProblem::new(
                    ReturnBeliefs::certain(DVector::from_vec(vec![q.sqrt()])),
                    CovMatrix::diagonal(&[1.0]).unwrap(),
                    1.0,
                )
                .unwrap(),
                alpha,
            )
            .unwrap();
            let (w, _) = solve_weights_constrained(&p, &ConstraintSet::unconstrained(), &tight()).unwrap();
            // MV weight is μ/(aσ²) = √q
            worst = worst.max((w.as_vector()[0] / q.sqrt() - g[i][j]).abs());
        }
    }
    let in_range = g.iter().flatten().all(|&v| v > 0.0 && v <= 1.0);
    let dec_q = (0..alphas.len()).all(|j| (1..qs.len()).all(|i| g[i][j] < g[i - 1][j]));
    let inc_a = (0..qs.len()).all(|i| (1..alphas.len()).all(|j| g[i][j] > g[i][j - 1]));
    report(
        3,
        "scaling function",
        &[
            (format!("max |g - numeric ratio| {worst:.2e}"), worst <= 1e-6),
            ("g in (0,1]".into(), in_range),
            ("decreasing in q".into(), dec_q),
            ("increasing in alpha".into(), inc_a),
        ],
    );
}

#[test]
fn criterion_04_risk_aversion_invariance() {
    let solve = |a: f64| {
        let problem = PortfolioProblem::new(
            ReturnBeliefs::certain(DVector::from_vec(vec![0.07, 0.04, 0.05])),
            CovMatrix::from_rows(&[vec![0.04, 0.01, 0.0], vec![0.01, 0.0625, 0.015], vec![0.0, 0.015, 0.09]]).unwrap(),
            a,
        )
        .unwrap();
        solve_weights_no_mu_uncertainty(&WishartAllocProblem::new(problem, 6.0).unwrap()).unwrap()
    };
    let (w1, d1) = solve(1.0);
    let unit = |w: &Weights| w.as_vector() / w.as_vector().norm();
    let (mut dg, mut dd): (f64, f64) = (0.0, 0.0);
    for a in [0.5, 5.0] {
        let (w, d) = solve(a);
        dg = dg.max((d.g - d1.g).abs());
        dd = dd.max((unit(&w) - unit(&w1)).amax());
    }
    report(
        4,
        "risk-aversion invariance",
        &[
            (format!("max |g(a) - g(1)| {dg:.1e}"), dg <= 1e-12),
            (format!("max direction change {dd:.1e}"), dd <= 1e-12),
        ],
    );
}

#[test]
fn criterion_05_univariate_cubic() {
    let mut rng = RngStream::new(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = UnivariateProblem::new(
            rng.random_range(-0.3..0.3),
            rng.random_range(0.0..0.05),
            rng.random_range(0.002..0.2),
            rng.random_range(0.0..0.03),
            rng.random_range(0.1..500.0),
            rng.random_range(0.2..10.0),
        )
        .unwrap();
        let edge = 0.999_999 * p.max_weight();
        let (x, _) = grid_maximize(
            |w| marginal_expected_utility(&p, w[0]).ok().map(|v| -v.log_magnitude),
            &[(-edge, edge)],
            4001,
        )
        .unwrap();
        worst = worst.max((solve_cubic(&p).unwrap() - x[0]).abs());
    }
    let base = UnivariateProblem::new(0.05, 0.0025, 0.0225, 0.01, 100.0, 1.0).unwrap();
    let resid = |p: UnivariateProblem, r: Regime| (solve_cubic(&p).unwrap() - asymptotic_weight(&p, r)).abs();
    let mu_ratio = resid(UnivariateProblem { mu0: 0.01, ..base }, Regime::MuSmall)
        / resid(UnivariateProblem { mu0: 0.005, ..base }, Regime::MuSmall);
    let a1 = resid(UnivariateProblem { alpha: 100.0, ..base }, Regime::AlphaLarge);
    let a2 = resid(UnivariateProblem { alpha: 1000.0, ..base }, Regime::AlphaLarge);
    report(
        5,
        "univariate cubic",
        &[
            (format!("max |cubic - grid| {worst:.2e} over 100 instances"), worst <= 1e-8),
            (format!("mu0 halving shrinks residual {mu_ratio:.2}x"), mu_ratio >= 8.0),
            (format!("alpha x10 residual {a1:.2e} -> {a2:.2e}"), a2 < a1),
        ],
    );
}

#[test]
fn criterion_06_fixed_point_consistency() {
    let problem = |sigma0: [f64; 2]| {
        PortfolioProblem::new(
            ReturnBeliefs::new(DVector::from_vec(vec![0.06, 0.04]), DVector::from_vec(sigma0.to_vec())).unwrap(),
            CovMatrix::from_rows(&[vec![0.04, 0.012], vec![0.012, 0.0625]]).unwrap(),
            2.0,
        )
        .unwrap()
    };
    let wp = WishartAllocProblem::new(problem([0.0, 0.0]), 7.0).unwrap();
    let d1 = (solve_weights_full(&wp).unwrap().0.as_vector() - solve_weights_no_mu_uncertainty(&wp).unwrap().0.as_vector()).amax();
    let p = problem([0.002, 0.001]);
    let total = p.sigma().matrix() + p.beliefs().sigma0();
    let shrunk = total.lu().solve(p.mu0()).unwrap() / 2.0;
    let wp = WishartAllocProblem::new(p, 1e12).unwrap();
    let d2 = (solve_weights_full(&wp).unwrap().0.as_vector() - shrunk).amax();
    report(
        6,
        "fixed-point consistency",
        &[
            (format!("Sigma0=0 vs closed form {d1:.1e}"), d1 <= 1e-10),
            (format!("alpha=1e12 vs (Sigma+Sigma0)^-1 mu/a {d2:.1e}"), d2 <= 1e-6),
        ],
    );
}

#[test]
fn criterion_07_block_separability_and_symmetry() {
    let block = |sigma_min_sq, sigma_sq, alpha, corr: &[Vec<f64>]| Model1Block {
        sigma_min_sq,
        sigma_sq,
        alpha,
        corr: CovMatrix::from_rows(corr).unwrap(),
    };
    let spec = Model1Spec::new(
        BlockStructure::contiguous(&[2, 3]).unwrap(),
        vec![
            block(0.01, 0.04, 8.0, &[vec![1.0, 0.5], vec![0.5, 1.0]]),
            block(0.005, 0.0625, 4.0, &[vec![1.0, 0.3, 0.1], vec![0.3, 1.0, 0.2], vec![0.1, 0.2, 1.0]]),
        ],
    )
    .unwrap();
    let beliefs = ReturnBeliefs::new(
        DVector::from_vec(vec![0.05, 0.04, 0.06, 0.03, 0.05]),
        DVector::from_vec(vec![0.002, 0.001, 0.003, 0.0, 0.002]),
    )
    .unwrap();
    let cs = ConstraintSet::unconstrained();
    let (joint, _) = solve_model1(&spec, &beliefs, 2.0, &cs, &tight()).unwrap();
    let mut sep: f64 = 0.0;
    for k in 0..2 {
        let idx = spec.structure().members(k).to_vec();
        let sub = Model1Spec::new(BlockStructure::contiguous(&[idx.len()]).unwrap(), vec![spec.blocks()[k].clone()]).unwrap();
        let sub_beliefs = ReturnBeliefs::new(
            DVector::from_iterator(idx.len(), idx.iter().map(|&j| beliefs.mu0()[j])),
            DVector::from_iterator(idx.len(), idx.iter().map(|&j| beliefs.sigma0_diag()[j])),
        )
        .unwrap();
        let (w, _) = solve_model1(&sub, &sub_beliefs, 2.0, &cs, &tight()).unwrap();
        for (p, &j) in idx.iter().enumerate() {
            sep = sep.max((w.as_vector()[p] - joint.as_vector()[j]).abs());
        }
    }

    let st = BlockStructure::contiguous(&[8, 12, 10]).unwrap();
    let spec2 = Model2Spec::new(
        st.clone(),
        0.005,
        0.04,
        20.0,
        DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.1, 0.2, 0.3, 0.15, 0.1, 0.15, 0.6]),
    )
    .unwrap();
    let b2 = ReturnBeliefs::new(
        st.expand(&DVector::from_vec(vec![0.05, 0.03, 0.04])),
        st.expand(&DVector::from_vec(vec![0.001, 0.0, 0.002])),
    )
    .unwrap();
    let full = solve_model2(&spec2, &b2, 2.0, &cs, false, &tight()).unwrap();
    let red = solve_model2(&spec2, &b2, 2.0, &cs, true, &tight()).unwrap();
    let agree = (full.weights.as_vector() - red.weights.as_vector()).amax();
    let w = full.weights.as_vector();
    let spread = (0..3)
        .map(|k| {
            let m = st.members(k);
            m.iter().map(|&j| (w[j] - w[m[0]]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    report(
        7,
        "block separability and symmetry",
        &[
            (format!("Model 1 joint vs per-block {sep:.1e}"), sep <= 1e-8),
            (format!("Model 2 reduced vs full {agree:.1e}"), agree <= 1e-8),
            (format!("within-block spread {spread:.1e}"), spread < 1e-10),
        ],
    );
}

fn one_d(p: f64, a: f64) -> TwoStateScenario {
    TwoStateScenario::new(
        p,
        State::new(DVector::from_vec(vec![0.06]), CovMatrix::diagonal(&[0.0225]).unwrap()).unwrap(),
        State::new(DVector::from_vec(vec![-0.3]), CovMatrix::diagonal(&[0.2025]).unwrap()).unwrap(),
        a,
    )
    .unwrap()
}

fn two_asset(p: f64, a: f64) -> TwoStateScenario {
    let normal = State::new(
        DVector::from_vec(vec![0.06, 0.04]),
        CovMatrix::from_rows(&[vec![0.04, 0.006], vec![0.006, 0.0225]]).unwrap(),
    )
    .unwrap();
    let stressed = State::new(
        DVector::from_vec(vec![-0.25, -0.1]),
        build_stressed_cov(&StressedCovSpec::new(0.45, 0.8, 2).unwrap()).unwrap(),
    )
    .unwrap();
    TwoStateScenario::new(p, normal, stressed, a).unwrap()
}

#[test]
fn criterion_08_lse_properties() {
    let mut rng = RngStream::new(8);
    let mut violations = 0;
    for _ in 0..10_000 {
        let sc = two_asset(rng.random_range(0.0..1.0), rng.random_range(0.01..100.0));
        let w = Weights::from_slice(&[rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).unwrap();
        let f = lse_objective(&sc, &w).unwrap();
        let (un, us) = sc.state_terms(w.as_vector());
        let m = un.max(us);
        if !(m <= f && f <= m + std::f64::consts::LN_2) {
            violations += 1;
        }
    }

    let a = 1e-3;
    let sc = one_d(0.9, a);
    let (w, _) = solve_two_state(&sc, &ConstraintSet::unconstrained(), &tight()).unwrap();
    let limit = low_a_limit_weights(&sc).unwrap().as_vector()[0];
    let low_a_rel = (w.as_vector()[0] / limit - 1.0).abs();

    let mut single: f64 = 0.0;
    for p in [0.0, 1.0] {
        let sc = two_asset(p, 2.0);
        let state = if p == 1.0 { &sc.normal } else { &sc.stressed };
        let mv = state.sigma.matrix().clone().lu().solve(&state.mu).unwrap() / 2.0;
        let (w, _) = solve_two_state(&sc, &ConstraintSet::unconstrained(), &tight()).unwrap();
        single = single.max((w.as_vector() - mv).amax());
    }

    let printed = 0.024 / (a * 0.052164);
    let printed_err = (limit / printed - 1.0).abs();
    report(
        8,
        "LSE properties",
        &[
            (format!("sandwich violations {violations}/10000"), violations == 0),
            (
                format!("low-a solve {:.4} vs limit {limit:.4}, rel diff {low_a_rel:.3}", w.as_vector()[0]),
                low_a_rel <= 0.01,
            ),
            (format!("p in {{0,1}} vs single-state MV {single:.1e}"), single <= 1e-8),
            (format!("1-D limit vs printed formula rel {printed_err:.1e}"), printed_err <= 1e-12),
        ],
    );
}

#[test]
fn criterion_09_minimax() {
    let sigma = CovMatrix::from_rows(&[
        vec![0.04, 0.01, 0.0, 0.002],
        vec![0.01, 0.09, 0.02, 0.0],
        vec![0.0, 0.02, 0.16, 0.01],
        vec![0.002, 0.0, 0.01, 0.0225],
    ])
    .unwrap();
    let (w0, _) = minimax_portfolio(&sigma, 0.0, &tight()).unwrap();
    let uniform = w0.as_vector().iter().map(|v| (v - 0.25).abs()).fold(0.0, f64::max);

    let sigma3 = CovMatrix::diagonal(&[0.01, 0.04, 0.09]).unwrap();
    let b = 10.0;
    let (w, _) = minimax_portfolio(&sigma3, b, &tight()).unwrap();
    let steps = 1000;
    let mut best = (f64::INFINITY, [0.0; 3]);
    for i in 0..=steps {
        for j in 0..=steps - i {
            let x = [i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
            let v = minimax_objective(&sigma3, b, &Weights::from_slice(&x).unwrap());
            if v < best.0 {
                best = (v, x);
            }
        }
    }
    let grid_diff = (0..3).map(|k| (w.as_vector()[k] - best.1[k]).abs()).fold(0.0, f64::max);
    report(
        9,
        "minimax",
        &[
            (format!("b=0 max |w - 1/N| {uniform:.1e}"), uniform <= 1e-9),
            (format!("N=3 vs 1e-3 simplex grid {grid_diff:.1e}"), grid_diff <= 2e-3),
        ],
    );
}

/// Rounds to two significant figures.
fn two_sig(x: f64) -> f64 {
    let scale = 10f64.powi(1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

#[test]
fn criterion_10_posterior_densities() {
    let s2 = 0.15f64 * 0.15;
    let pdf = |x: f64| scaled_inv_chi2_pdf(x, 20, s2).unwrap();
    let mass = integrate(pdf, 1e-12, 100.0 * s2, 1e-12);
    let mean = integrate(|x| x * pdf(x), 1e-12, 1000.0 * s2, 1e-13);
    let closed_mean = scaled_inv_chi2_mean(20, s2).unwrap();
    let std = scaled_inv_chi2_variance(20, s2).unwrap().sqrt();
    let ratio = mean / std;
    let cmass = integrate(|r| conditional_correlation_pdf(r, 0.5, 60).unwrap(), -1.0 + 1e-12, 1.0 - 1e-12, 1e-12);
    let mut symmetric = true;
    for k in 0..199 {
        let rho = -0.99 + 0.01 * k as f64;
        for r in [-0.8, -0.2, 0.3, 0.8] {
            symmetric &= conditional_correlation_pdf(rho, r, 20).unwrap() == conditional_correlation_pdf(-rho, -r, 20).unwrap();
        }
    }
    report(
        10,
        "posterior densities",
        &[
            (
                format!("mean {mean:.6e} vs 19/17 s^2 {:.6e}", s2 * 19.0 / 17.0),
                (mean - s2 * 19.0 / 17.0).abs() <= 1e-9 && (closed_mean - s2 * 19.0 / 17.0).abs() <= 1e-15,
            ),
            (format!("mean/std {ratio:.4} -> {} at two sig figs, expected 2.8", two_sig(ratio)), two_sig(ratio) == 2.8),
            (format!("inverse chi-squared mass {mass:.9}"), (mass - 1.0).abs() <= 1e-6),
            (format!("correlation mass {cmass:.9}"), (cmass - 1.0).abs() <= 1e-5),
            ("(rho, r) -> (-rho, -r) symmetry exact".into(), symmetric),
        ],
    );
}

/// Runs a CLI command in-process and returns whether it succeeded together
/// with what it wrote.
fn cli(args: &[&str]) -> (bool, Vec<u8>) {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out.csv");
    let mut full = vec!["covalloc", "--out", out.to_str().unwrap()];
    full.extend_from_slice(args);
    let ok = covalloc_cli::run_args(full).is_ok();
    (ok, fs::read(&out).unwrap_or_default())
}

fn csv_column(text: &[u8], col: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_reader(text);
    let idx = r.headers().unwrap().iter().position(|h| h == col).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

/// Mean with its SE, and unbiased variance with its SE.
fn moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (mean, (m2 / n).sqrt(), m2 * n / (n - 1.0), ((m4 - m2 * m2) / n).sqrt())
}

#[test]
fn criterion_11_figure_reproductions() {
    let mut checks = Vec::new();
    let sigma4 = 0.15f64.powi(4);
    for alpha in ["10", "100", "1000"] {
        let (ok, out) = cli(&["sample", "--sigma-min", "0.1", "--sigma", "0.15", "--alpha", alpha, "--n", "100000"]);
        assert!(ok);
        let s2: Vec<f64> = csv_column(&out, "value").iter().map(|v| v * v).collect();
        let (m, se, var, var_se) = moments(&s2);
        let target_var = 2.0 * sigma4 / alpha.parse::<f64>().unwrap();
        let (zm, zv) = ((m - 0.0325) / se, (var - target_var) / var_se);
        checks.push((format!("gamma alpha={alpha} z_mean={zm:.2} z_var={zv:.2}"), zm.abs() <= 3.0 && zv.abs() <= 3.0));
    }
    let mut spreads = Vec::new();
    for alpha in ["10", "100", "1000"] {
        let (ok, out) = cli(&["wishart-sim", "--sigma-a", "0.2", "--sigma-b", "0.4", "--rho", "0.5", "--alpha", alpha, "--n", "100000"]);
        assert!(ok);
        let (va, vb, c) = (csv_column(&out, "vol_a"), csv_column(&out, "vol_b"), csv_column(&out, "corr"));
        let saa: Vec<f64> = va.iter().map(|v| v * v).collect();
        let sbb: Vec<f64> = vb.iter().map(|v| v * v).collect();
        let sab: Vec<f64> = (0..c.len()).map(|i| c[i] * va[i] * vb[i]).collect();
        let mut worst: f64 = 0.0;
        for (xs, target) in [(&saa, 0.04), (&sbb, 0.16), (&sab, 0.04)] {
            let (m, se, _, _) = moments(xs);
            worst = worst.max(((m - target) / se).abs());
        }
        spreads.push(moments(&c).2.sqrt());
        checks.push((format!("wishart alpha={alpha} max |z| of means {worst:.2}"), worst <= 3.0));
    }
    checks.push((
        format!("correlation sd {:.4} > {:.4} > {:.4}", spreads[0], spreads[1], spreads[2]),
        spreads[0] > spreads[1] && spreads[1] > spreads[2],
    ));
    report(11, "figure reproductions", &checks);
}

#[test]
fn criterion_12_end_to_end_validation() {
    let (ok, out) = cli(&["validate"]);
    let mut r = csv::Reader::from_reader(out.as_slice());
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    let failed: Vec<&str> = rows.iter().filter(|x| &x[5] != "true").map(|x| x.get(0).unwrap()).collect();
    let mc = rows.iter().filter(|x| !x[3].is_empty() && &x[0] != "g_mutation_detected");
    let max_z = mc.map(|x| x[4].parse::<f64>().unwrap().abs()).fold(0.0, f64::max);

    let (mutated_ok, mutated) = cli(&["validate", "--g-bias", "0.01"]);
    let mut r = csv::Reader::from_reader(mutated.as_slice());
    let z_mut = r
        .records()
        .map(|x| x.unwrap())
        .find(|x| &x[0] == "wishart_optimal_eu")
        .map(|x| x[4].parse::<f64>().unwrap())
        .unwrap();
    report(
        12,
        "end-to-end validation",
        &[
            (format!("{} checks, failed {failed:?}, max MC |z| {max_z:.2}", rows.len()), ok && failed.is_empty()),
            (format!("+1% g mutation z={z_mut:.1}"), z_mut.abs() > 3.0 && !mutated_ok),
        ],
    );
}
