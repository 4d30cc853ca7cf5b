use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use covalloc::distributions::RngStream;
use covalloc::wishart_alloc::{solve_weights_full, WishartAllocProblem};
use covalloc::ProblemDoc;
use covalloc_cli::volcorr::huber_fit;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_covalloc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Rows of a CSV with a header, as maps from column to text.
fn rows(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_string).collect();
    r.records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(str::to_string)).collect())
        .collect()
}

fn num(row: &std::collections::HashMap<String, String>, col: &str) -> f64 {
    row[col].parse().unwrap()
}

fn weights(json: &str) -> Vec<f64> {
    let v: Value = serde_json::from_str(json).unwrap();
    v["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

const WISHART: &str = r#"{"mu0":[0.05,0.03],"sigma":[[0.04,0.02],[0.02,0.09]],"risk_aversion":2,"alpha":50}"#;

const SCENARIO: &str = r#"{
  "p": 0.9,
  "risk_aversion": 2,
  "normal": {"mu": [0.06, 0.04], "sigma": [[0.04, 0.006], [0.006, 0.0225]]},
  "stressed": {"mu": [-0.25, -0.1], "spec": {"sigma_s": 0.45, "rho_s": 0.8}}
}"#;

#[test]
fn wishart_weights_equal_library_call() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "w.json", WISHART);
    let got = weights(&ok(&["allocate", "--model", "wishart", "--input", s(&input)]));
    let doc = ProblemDoc {
        mu0: vec![0.05, 0.03],
        sigma: vec![vec![0.04, 0.02], vec![0.02, 0.09]],
        sigma0_diag: None,
        risk_aversion: 2.0,
        risk_free: 0.0,
    };
    let p = WishartAllocProblem::new(doc.into_problem().unwrap(), 50.0).unwrap();
    let (w, _) = solve_weights_full(&p).unwrap();
    assert_eq!(got, w.to_vec());
}

#[test]
fn two_state_with_certain_normal_state_is_mean_variance() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "s.json", SCENARIO);
    let w = weights(&ok(&["allocate", "--model", "two-state", "--p", "1.0", "--input", s(&input), "--tol", "1e-13"]));
    // Σ⁻¹μ/a for the normal state
    let det = 0.04 * 0.0225 - 0.006 * 0.006;
    let mv = [(0.0225 * 0.06 - 0.006 * 0.04) / det / 2.0, (0.04 * 0.04 - 0.006 * 0.06) / det / 2.0];
    for (g, m) in w.iter().zip(mv) {
        assert!((g - m).abs() < 1e-8 * m.abs(), "{g} vs {m}");
    }
}

#[test]
fn minimax_without_risk_term_is_uniform() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "m.json", r#"{"sigma":[[0.01,0,0,0],[0,0.04,0,0],[0,0,0.09,0.01],[0,0,0.01,0.16]],"b":5}"#);
    let w = weights(&ok(&["allocate", "--model", "minimax", "--b", "0", "--input", s(&input)]));
    assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-9), "{w:?}");
}

#[test]
fn block_and_min_variance_models_dispatch() {
    let dir = TempDir::new().unwrap();
    let m2 = write(
        &dir,
        "m2.json",
        r#"{"assignments":[1,1,2,2,2],"mu0":[0.05,0.05,0.03,0.03,0.03],"risk_aversion":2,
            "sigma_min_sq":0.005,"sigma_sq":0.04,"alpha":20,"rho":[[0.5,0.2],[0.3]]}"#,
    );
    let full: Value = serde_json::from_str(&ok(&["allocate", "--model", "block2", "--input", s(&m2)])).unwrap();
    let red: Value = serde_json::from_str(&ok(&["allocate", "--model", "block2", "--reduce", "--input", s(&m2)])).unwrap();
    assert_eq!(red["diagnostics"]["reduced"], Value::Bool(true));
    for (a, b) in full["weights"].as_array().unwrap().iter().zip(red["weights"].as_array().unwrap()) {
        assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-8);
    }
    let input = write(&dir, "s.json", SCENARIO);
    let w = weights(&ok(&["allocate", "--model", "min-variance", "--c", "0.01", "--input", s(&input)]));
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12 && w.iter().all(|&x| x >= 0.0));
}

#[test]
fn univariate_sweep_table() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "u.json",
        r#"{"mu0":0.05,"sigma0_sq":0.0025,"sigma_sq":0.0225,"sigma_min_sq":0.01,"alpha":100,"risk_aversion":1}"#,
    );
    let text = ok(&[
        "allocate", "--model", "univariate", "--input", s(&input), "--sweep-mu0", "0.01,0.005", "--regime", "mu_small",
    ]);
    let r = rows(&text);
    assert_eq!(r.len(), 2);
    let resid: Vec<f64> = r.iter().map(|x| (num(x, "w_exact") - num(x, "w_asymptotic")).abs()).collect();
    assert!(resid[0] / resid[1] >= 8.0);
    let single = weights(&ok(&["allocate", "--model", "univariate", "--input", s(&input)]));
    assert_eq!(single.len(), 1);
}

#[test]
fn input_and_solver_errors_have_distinct_exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = run(&["allocate", "--model", "wishart", "--input", "/nonexistent.json"]);
    assert_eq!(missing.status.code(), Some(1));
    let bad = write(&dir, "bad.json", &WISHART.replace("0.09]", "\"x\"]"));
    let out = run(&["allocate", "--model", "wishart", "--input", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/sigma/1/1"));
    let input = write(&dir, "s.json", SCENARIO);
    let capped = run(&["allocate", "--model", "two-state", "--input", s(&input), "--max-iter", "1"]);
    assert_eq!(capped.status.code(), Some(2));
}

#[test]
fn scaling_table_shape() {
    let text = ok(&["scaling", "--q-grid", "1e-8,0.1,1,10,100", "--alpha-grid", "1,10,100"]);
    let r = rows(&text);
    assert_eq!(r.len(), 15);
    let g = |q: f64, a: f64| num(r.iter().find(|x| num(x, "q") == q && num(x, "alpha") == a).unwrap(), "g");
    assert!((g(10.0, 10.0) - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
    for a in [1.0, 10.0, 100.0] {
        assert!((g(1e-8, a) - 1.0).abs() < 1e-6);
        let col: Vec<f64> = [1e-8, 0.1, 1.0, 10.0, 100.0].iter().map(|&q| g(q, a)).collect();
        assert!(col.windows(2).all(|p| p[1] < p[0]));
    }
    let lap = rows(&ok(&["scaling", "--model", "laplace", "--q-grid", "4", "--alpha-grid", "5"]));
    assert!((num(&lap[0], "g") - 0.5).abs() < 1e-12);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    for args in [
        &["sample", "--n", "5000", "--seed", "9"][..],
        &["wishart-sim", "--n", "2000"][..],
        &["validate", "--n-samples", "5000"][..],
    ] {
        assert_eq!(ok(args), ok(args));
    }
    assert_ne!(ok(&["sample", "--n", "100", "--seed", "1"]), ok(&["sample", "--n", "100", "--seed", "2"]));
}

#[test]
fn csv_numbers_round_trip() {
    let text = ok(&["scaling"]);
    for row in rows(&text) {
        let g = num(&row, "g");
        let printed = &row["g"];
        assert_eq!(covalloc_cli::output::fmt_f64(g), *printed);
        let exact = covalloc::wishart_alloc::scaling_g_wishart(num(&row, "q"), num(&row, "alpha")).unwrap();
        assert_eq!(g, exact);
    }
}

#[test]
fn volatility_samples_respect_floor() {
    let r = rows(&ok(&["sample", "--alpha", "1000", "--n", "20000"]));
    let v: Vec<f64> = r.iter().map(|x| num(x, "value")).collect();
    assert!(v.iter().all(|&x| x >= 0.1));
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean - 0.0325f64.sqrt()).abs() < 2e-3, "{mean}");
    let low = rows(&ok(&["sample", "--alpha", "10", "--n", "20000"]));
    assert!(low.iter().all(|x| num(x, "value") >= 0.1));
}

#[test]
fn wishart_correlation_spread_at_low_alpha() {
    let r = rows(&ok(&["wishart-sim", "--alpha", "10", "--n", "100000"]));
    let mut c: Vec<f64> = r.iter().map(|x| num(x, "corr")).collect();
    c.sort_by(f64::total_cmp);
    let n = c.len();
    let (lo, hi) = (c[n / 100], c[99 * n / 100]);
    assert!(lo > -0.35 && lo < -0.1 && hi > 0.8 && hi < 0.95, "({lo}, {hi})");
    // large-sample variance of a correlation estimate, (1−ρ²)²/(α−1)
    let mean = c.iter().sum::<f64>() / n as f64;
    let sd = (c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let approx = (0.75f64 * 0.75 / 9.0).sqrt();
    assert!((sd / approx - 1.0).abs() < 0.1, "{sd} vs {approx}");
}

fn iqr(r: &[std::collections::HashMap<String, String>], n: u32, rr: f64) -> f64 {
    let curve: Vec<(f64, f64)> = r
        .iter()
        .filter(|x| x["n"] == n.to_string() && num(x, "r") == rr)
        .map(|x| (num(x, "rho"), num(x, "pdf")))
        .collect();
    let total: f64 = curve.iter().map(|c| c.1).sum();
    let mut acc = 0.0;
    let (mut q1, mut q3) = (None, None);
    for (rho, p) in curve {
        acc += p / total;
        if q1.is_none() && acc >= 0.25 {
            q1 = Some(rho);
        }
        if q3.is_none() && acc >= 0.75 {
            q3 = Some(rho);
        }
    }
    q3.unwrap() - q1.unwrap()
}

#[test]
fn posterior_curves() {
    let corr = rows(&ok(&["posterior", "--kind", "correlation", "--points", "2000"]));
    assert_eq!(corr.len(), 9 * 2000);
    assert!(iqr(&corr, 120, 0.8) < iqr(&corr, 20, 0.8));
    let vol = rows(&ok(&["posterior", "--kind", "volatility", "--n", "20", "--s", "0.15", "--points", "4000"]));
    // Riemann sum over σ ∈ (0, 0.45]
    let h = 0.45 / 4000.0;
    let mass: f64 = vol.iter().map(|x| num(x, "volatility_pdf")).sum::<f64>() * h;
    assert!((mass - 1.0).abs() < 1e-3, "{mass}");
}

#[test]
fn validate_passes_and_catches_mutation() {
    let base = ok(&["validate"]);
    let small = ok(&["validate", "--n-samples", "1000"]);
    let (b, s) = (rows(&base), rows(&small));
    assert!(b.iter().all(|x| x["pass"] == "true"));
    let mut ratios = Vec::new();
    for (x, y) in b.iter().zip(&s) {
        if !x["mc_se"].is_empty() && !x["check"].starts_with("gaussian") {
            ratios.push(num(y, "mc_se") / num(x, "mc_se"));
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean / 10.0 - 1.0).abs() < 0.3, "{ratios:?}");
    let mutated = run(&["validate", "--g-bias", "0.01"]);
    assert_ne!(mutated.status.code(), Some(0));
    let r = rows(&String::from_utf8(mutated.stdout).unwrap());
    let row = r.iter().find(|x| x["check"] == "wishart_optimal_eu").unwrap();
    assert!(num(row, "z_score").abs() > 3.0);
}

fn returns_csv(dates: &[String], cols: &[Vec<f64>]) -> String {
    let mut out = String::from("date");
    for j in 0..cols.len() {
        out.push_str(&format!(",T{j}"));
    }
    out.push('\n');
    for (i, d) in dates.iter().enumerate() {
        out.push_str(d);
        for c in cols {
            out.push_str(&format!(",{}", c[i]));
        }
        out.push('\n');
    }
    out
}

fn business_days(months: u32, per_month: u32) -> Vec<String> {
    (1..=months)
        .flat_map(|m| (1..=per_month).map(move |d| format!("2023-{m:02}-{d:02}")))
        .collect()
}

#[test]
fn vol_corr_degenerate_months() {
    let dir = TempDir::new().unwrap();
    let dates = business_days(3, 21);
    let x: Vec<f64> = (0..dates.len()).map(|i| ((i * 7919 % 97) as f64 - 48.0) * 1e-3).collect();
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let mut flat = x.clone();
    let mut flat2 = neg.clone();
    // second month constant and equal across assets
    for i in 21..42 {
        flat[i] = 0.001;
        flat2[i] = 0.001;
    }
    let mut text = returns_csv(&dates, &[flat, flat2]);
    text.push_str("2023-04-01,0.01,\n2023-04-02,NA,0.01\n");
    let input = write(&dir, "r.csv", &text);
    let out = dir.path().join("out.csv");
    ok(&["vol-corr", "--input", s(&input), "--out", s(&out)]);
    let r = rows(&fs::read_to_string(&out).unwrap());
    assert_eq!(r.iter().map(|x| x["month"].as_str()).collect::<Vec<_>>(), ["2023-01", "2023-03"]);
    for row in &r {
        assert_eq!(num(row, "avg_correlation"), -1.0);
    }
    let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["rows_dropped"], 2);
    assert_eq!(meta["annualization_factor"], 252.0);
    let skipped = meta["skipped_months"].as_array().unwrap();
    assert_eq!(skipped.len(), 1);
    assert!(skipped[0]["reason"].as_str().unwrap().starts_with("ZeroVariance"));

    let short = write(&dir, "short.csv", &returns_csv(&business_days(1, 10), &[vec![0.01; 10], vec![0.02; 10]]));
    assert_eq!(run(&["vol-corr", "--input", s(&short)]).status.code(), Some(1));
}

#[test]
fn vol_corr_recovers_equicorrelated_parameters() {
    let dir = TempDir::new().unwrap();
    let (n_assets, rho, sigma) = (5, 0.8f64, 0.45);
    let dates = business_days(12, 21);
    let daily = sigma / 252f64.sqrt();
    let mut rng = RngStream::new(3);
    let mut cols = vec![Vec::new(); n_assets];
    for _ in &dates {
        let common: f64 = StandardNormal.sample(&mut rng);
        for c in cols.iter_mut() {
            let own: f64 = StandardNormal.sample(&mut rng);
            c.push(daily * (rho.sqrt() * common + (1.0 - rho).sqrt() * own));
        }
    }
    let input = write(&dir, "r.csv", &returns_csv(&dates, &cols));
    let meta = dir.path().join("meta.json");
    let r = rows(&ok(&["vol-corr", "--input", s(&input), "--meta", s(&meta)]));
    assert_eq!(r.len(), 12);
    let vol = r.iter().map(|x| num(x, "avg_volatility")).sum::<f64>() / 12.0;
    let corr = r.iter().map(|x| num(x, "avg_correlation")).sum::<f64>() / 12.0;
    // 12 months × 20 degrees of freedom: relative SE of a volatility ≈ 1/√480
    assert!((vol / sigma - 1.0).abs() < 3.0 / 480f64.sqrt(), "{vol}");
    assert!((corr - rho).abs() < 0.03, "{corr}");
    let meta: Value = serde_json::from_str(&fs::read_to_string(meta).unwrap()).unwrap();
    assert!(meta["huber_fit"]["slope"].is_f64());
}

#[test]
fn huber_fit_resists_outliers() {
    let x: Vec<f64> = (0..40).map(|i| 0.1 + 0.01 * i as f64).collect();
    let mut y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 0.2 + 1.5 * v + 0.002 * ((i * 37 % 11) as f64 - 5.0)).collect();
    y[5] += 2.0;
    y[30] -= 3.0;
    let fit = huber_fit(&x, &y).unwrap();
    assert!(fit.converged);
    assert!((fit.slope - 1.5).abs() < 0.05 && (fit.intercept - 0.2).abs() < 0.02, "{fit:?}");
    assert!(huber_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
}
