use std::fs;
use std::str::FromStr;

use covalloc::block::{solve_model1, solve_model2, Model1Doc, Model2Doc};
use covalloc::scenario::{
    low_a_limit_weights, lse_objective, min_variance_two_state, minimax_objective,
    minimax_portfolio, solve_two_state, ScenarioDoc,
};
use covalloc::solver::{ConstraintSet, SolveReport, SolveStatus};
use covalloc::types::parse_json;
use covalloc::univariate::{asymptotic_weight, marginal_expected_utility, solve_cubic, Regime, UnivariateProblem};
use covalloc::wishart_alloc::{solve_weights_constrained, solve_weights_full, WishartAllocProblem};
use covalloc::{CovMatrix, ProblemDoc, Weights};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::args::{AllocateArgs, Constraints, Model};
use crate::output::{write_json, Table};
use crate::{check_grid, input_error, CliResult, Common};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnivariateDoc {
    pub mu0: f64,
    #[serde(default)]
    pub sigma0_sq: f64,
    pub sigma_sq: f64,
    #[serde(default)]
    pub sigma_min_sq: f64,
    pub alpha: f64,
    pub risk_aversion: f64,
}

/// A [`ProblemDoc`] plus the Wishart degrees of freedom.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WishartDoc {
    pub mu0: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    #[serde(default)]
    pub sigma0_diag: Option<Vec<f64>>,
    pub risk_aversion: f64,
    #[serde(default)]
    pub risk_free: f64,
    pub alpha: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimaxDoc {
    pub sigma: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Option<f64>,
}

impl WishartDoc {
    /// `alpha` and `a` override the document.
    pub fn into_problem(self, alpha: Option<f64>, a: Option<f64>) -> CliResult<WishartAllocProblem> {
        let alpha = alpha
            .or(self.alpha)
            .ok_or_else(|| input_error("/alpha: missing (and not given on the command line)"))?;
        let doc = ProblemDoc {
            mu0: self.mu0,
            sigma: self.sigma,
            sigma0_diag: self.sigma0_diag,
            risk_aversion: a.unwrap_or(self.risk_aversion),
            risk_free: self.risk_free,
        };
        Ok(WishartAllocProblem::new(doc.into_problem()?, alpha)?)
    }
}

fn constraint_set(c: Constraints) -> ConstraintSet {
    match c {
        Constraints::None => ConstraintSet::unconstrained(),
        Constraints::LongOnly => ConstraintSet::long_only(),
        Constraints::Simplex => ConstraintSet::simplex(),
    }
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::Stalled => "stalled",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::DomainBreach => "domain_breach",
    }
}

fn report_json(r: &SolveReport) -> Value {
    json!({
        "method": "projected_gradient",
        "status": status_name(r.status),
        "iterations": r.iterations,
        "grad_norm": r.grad_norm,
        "objective": r.objective,
    })
}

fn closed_form() -> Value {
    json!({ "method": "closed_form", "status": "converged" })
}

fn result(weights: &Weights, diagnostics: Value, report: Value) -> Value {
    json!({ "weights": weights.to_vec(), "diagnostics": diagnostics, "report": report })
}

pub fn run(common: &Common, args: &AllocateArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| input_error(format!("{}: {e}", args.input.display())))?;
    let sweeping = args.sweep_mu0.is_some() || args.sweep_alpha.is_some() || args.sweep_sigma0_sq.is_some();
    if sweeping && args.model != Model::Univariate {
        return Err(input_error("sweeps are only available for --model univariate"));
    }
    if sweeping {
        let doc: UnivariateDoc = parse_json(&text)?;
        return univariate_sweep(common, args, &doc);
    }
    let value = solve(common, args, &text)?;
    write_json(common.out.as_deref(), &value)
}

/// Solves the problem in `text` and returns the output document.
pub fn solve(common: &Common, args: &AllocateArgs, text: &str) -> CliResult<Value> {
    let opts = common.solver_options();
    let cs = constraint_set(args.constraints);
    match args.model {
        Model::Univariate => {
            let doc: UnivariateDoc = parse_json(text)?;
            let p = univariate_problem(&doc, args.risk_aversion)?;
            let w = solve_cubic(&p)?;
            let asymptotic: serde_json::Map<String, Value> =
                Regime::ALL.iter().map(|r| (r.as_str().to_string(), json!(asymptotic_weight(&p, *r)))).collect();
            let eu = marginal_expected_utility(&p, w)?;
            let diagnostics = json!({
                "max_weight": p.max_weight(),
                "log_neg_expected_utility": eu.log_magnitude,
                "asymptotic": asymptotic,
            });
            Ok(result(&Weights::from_slice(&[w])?, diagnostics, closed_form()))
        }
        Model::Wishart => {
            let doc: WishartDoc = parse_json(text)?;
            let p = doc.into_problem(args.alpha, args.risk_aversion)?;
            if args.constraints == Constraints::None {
                let (w, d) = solve_weights_full(&p)?;
                let diagnostics = json!({
                    "d": d.d,
                    "q": d.q,
                    "g": d.g,
                    "multiple_roots": d.multiple_roots,
                    "max_risk": p.max_risk(),
                    "stationarity_residual": p.stationarity_residual(&w)?,
                });
                Ok(result(&w, diagnostics, closed_form()))
            } else {
                let (w, report) = solve_weights_constrained(&p, &cs, &opts)?;
                let diagnostics = json!({
                    "d": p.problem.sigma().quad_form(w.as_vector()),
                    "marginalized_objective": p.marginalized_objective(&w)?,
                });
                Ok(result(&w, diagnostics, report_json(&report)))
            }
        }
        Model::Block1 => {
            let mut doc = Model1Doc::from_json(text)?;
            if let Some(a) = args.risk_aversion {
                doc.risk_aversion = a;
            }
            let p = doc.into_problem()?;
            let (w, report) = solve_model1(&p.spec, &p.beliefs, p.a, &cs, &opts)?;
            let diagnostics = json!({
                "objective": p.objective(w.as_vector())?,
                "block_quad_forms": p.spec.block_quad_forms(w.as_vector()),
            });
            Ok(result(&w, diagnostics, report_json(&report)))
        }
        Model::Block2 => {
            let mut doc = Model2Doc::from_json(text)?;
            if let Some(a) = args.risk_aversion {
                doc.risk_aversion = a;
            }
            let p = doc.into_problem()?;
            let sol = solve_model2(&p.spec, &p.beliefs, p.a, &cs, args.reduce, &opts)?;
            let diagnostics = json!({
                "objective": p.objective(sol.weights.as_vector())?,
                "block_weights": sol.block_weights.as_slice(),
                "reduced": sol.reduced,
                "min_eigenvalue": p.spec.min_eigenvalue(),
            });
            Ok(result(&sol.weights, diagnostics, report_json(&sol.report)))
        }
        Model::TwoState => {
            let mut doc = ScenarioDoc::from_json(text)?;
            if let Some(p) = args.p {
                doc.p = p;
            }
            let sc = doc.into_scenario(args.risk_aversion)?;
            let (w, report) = solve_two_state(&sc, &cs, &opts)?;
            let (u_normal, u_stressed) = sc.state_terms(w.as_vector());
            let diagnostics = json!({
                "lse": lse_objective(&sc, &w)?,
                "u_normal": finite_or_null(u_normal),
                "u_stressed": finite_or_null(u_stressed),
                "low_a_limit": low_a_limit_weights(&sc).map(|l| l.to_vec()).ok(),
                "high_a_objective": sc.high_a_objective(&w)?,
            });
            Ok(result(&w, diagnostics, report_json(&report)))
        }
        Model::Minimax => {
            let doc: MinimaxDoc = parse_json(text)?;
            let b = args.b.or(doc.b).ok_or_else(|| input_error("/b: missing (and not given on the command line)"))?;
            let sigma = CovMatrix::from_rows(&doc.sigma)?;
            if args.constraints != Constraints::None && args.constraints != Constraints::Simplex {
                log::warn!("minimax always solves over the long-only simplex; --constraints ignored");
            }
            let (w, report) = minimax_portfolio(&sigma, b, &opts)?;
            let diagnostics = json!({
                "b": b,
                "objective": minimax_objective(&sigma, b, &w),
                "max_weight": w.as_vector().max(),
                "variance": sigma.quad_form(w.as_vector()),
            });
            Ok(result(&w, diagnostics, report_json(&report)))
        }
        Model::MinVariance => {
            let mut doc = ScenarioDoc::from_json(text)?;
            if let Some(p) = args.p {
                doc.p = p;
            }
            let a = args.risk_aversion.or(doc.risk_aversion).or(Some(1.0));
            let sc = doc.into_scenario(a)?;
            let (w, report) = min_variance_two_state(&sc, args.c, &opts)?;
            let v = w.as_vector();
            let diagnostics = json!({
                "c": args.c,
                "normal_variance": sc.normal.sigma.quad_form(v),
                "stressed_variance": sc.stressed.sigma.quad_form(v),
            });
            Ok(result(&w, diagnostics, report_json(&report)))
        }
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn univariate_problem(doc: &UnivariateDoc, a: Option<f64>) -> CliResult<UnivariateProblem> {
    Ok(UnivariateProblem::new(
        doc.mu0,
        doc.sigma0_sq,
        doc.sigma_sq,
        doc.sigma_min_sq,
        doc.alpha,
        a.unwrap_or(doc.risk_aversion),
    )?)
}

fn univariate_sweep(common: &Common, args: &AllocateArgs, doc: &UnivariateDoc) -> CliResult<()> {
    let base = univariate_problem(doc, args.risk_aversion)?;
    let mu0s = args.sweep_mu0.clone().unwrap_or_else(|| vec![base.mu0]);
    let alphas = args.sweep_alpha.clone().unwrap_or_else(|| vec![base.alpha]);
    let sigma0s = args.sweep_sigma0_sq.clone().unwrap_or_else(|| vec![base.sigma0_sq]);
    check_grid("sweep-mu0", &mu0s)?;
    check_grid("sweep-alpha", &alphas)?;
    check_grid("sweep-sigma0-sq", &sigma0s)?;
    let regimes = match &args.regime {
        Some(r) => vec![Regime::from_str(r)?],
        None => Regime::ALL.to_vec(),
    };
    let mut table = Table::create(
        common.out.as_deref(),
        &["mu0", "alpha", "sigma0_sq", "w_exact", "w_asymptotic", "regime"],
    )?;
    for &mu0 in &mu0s {
        for &alpha in &alphas {
            for &sigma0_sq in &sigma0s {
                let p = UnivariateProblem::new(mu0, sigma0_sq, base.sigma_sq, base.sigma_min_sq, alpha, base.a)?;
                let w = solve_cubic(&p)?;
                for r in &regimes {
                    table.row(&[
                        mu0.into(),
                        alpha.into(),
                        sigma0_sq.into(),
                        w.into(),
                        asymptotic_weight(&p, *r).into(),
                        r.as_str().into(),
                    ])?;
                }
            }
        }
    }
    table.finish()
}
