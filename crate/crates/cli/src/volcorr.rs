use std::fs;
use std::io::Write;
use std::path::PathBuf;

use chrono::{Datelike, NaiveDate};
use serde::Serialize;
use serde_json::json;

use crate::args::VolCorrArgs;
use crate::output::{write_json, Table};
use crate::{input_error, CliResult, Common};

pub const TRADING_DAYS: f64 = 252.0;
pub const HUBER_DELTA: f64 = 1.345;
const HUBER_MAX_ITER: usize = 100;
const MIN_TOTAL_ROWS: usize = 21;

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsTable {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// One row per date.
    pub returns: Vec<Vec<f64>>,
    /// Rows dropped for missing or unparseable values.
    pub dropped_rows: usize,
}

impl ReturnsTable {
    /// Reads `date,<ticker>,...` with ISO-8601 dates. Rows with gaps are
    /// dropped and counted.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.get(0) != Some("date") {
            return Err(input_error("returns CSV: first column must be `date`"));
        }
        let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        if tickers.len() < 2 {
            return Err(input_error("returns CSV: need at least two assets"));
        }
        let mut dates = Vec::new();
        let mut returns = Vec::new();
        let mut dropped_rows = 0;
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let raw = record.get(0).unwrap_or("");
            let date = NaiveDate::parse_from_str(raw, "%Y-%m-%d")
                .map_err(|e| input_error(format!("returns CSV row {}: bad date `{raw}`: {e}", line + 1)))?;
            if let Some(prev) = dates.last() {
                if date <= *prev {
                    return Err(input_error(format!("returns CSV row {}: dates must be strictly increasing", line + 1)));
                }
            }
            let values: Option<Vec<f64>> = (1..=tickers.len())
                .map(|j| record.get(j).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite()))
                .collect();
            match values {
                Some(v) if record.len() == tickers.len() + 1 => {
                    dates.push(date);
                    returns.push(v);
                }
                _ => dropped_rows += 1,
            }
        }
        if dropped_rows > 0 {
            log::warn!("dropped {dropped_rows} row(s) with missing values");
        }
        if dates.len() < MIN_TOTAL_ROWS {
            return Err(input_error(format!(
                "returns CSV: {} complete rows, need at least {MIN_TOTAL_ROWS}",
                dates.len()
            )));
        }
        Ok(Self {
            dates,
            tickers,
            returns,
            dropped_rows,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthStat {
    pub month: String,
    pub rows: usize,
    pub avg_volatility: f64,
    pub avg_correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedMonth {
    pub month: String,
    pub reason: String,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per calendar month: the cross-sectional mean of annualized per-asset
/// sample standard deviations, and the mean pairwise Pearson correlation.
pub fn monthly_stats(table: &ReturnsTable, min_rows: usize) -> (Vec<MonthStat>, Vec<SkippedMonth>) {
    let mut stats = Vec::new();
    let mut skipped = Vec::new();
    let n_assets = table.tickers.len();
    let mut start = 0;
    while start < table.dates.len() {
        let key = (table.dates[start].year(), table.dates[start].month());
        let mut end = start;
        while end < table.dates.len() && (table.dates[end].year(), table.dates[end].month()) == key {
            end += 1;
        }
        let month = format!("{:04}-{:02}", key.0, key.1);
        let rows = &table.returns[start..end];
        start = end;
        if rows.len() < min_rows {
            log::warn!("{month}: InsufficientData ({} rows, need {min_rows}); skipped", rows.len());
            skipped.push(SkippedMonth {
                month,
                reason: format!("InsufficientData: {} rows", rows.len()),
            });
            continue;
        }
        let cols: Vec<Vec<f64>> = (0..n_assets).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        let centered: Vec<Vec<f64>> = cols
            .iter()
            .map(|c| {
                let m = mean(c);
                c.iter().map(|x| x - m).collect()
            })
            .collect();
        let ss: Vec<f64> = centered.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
        // a constant column leaves only rounding noise around its mean
        let flat = |j: usize| {
            let scale = cols[j].iter().fold(0.0f64, |m, x| m.max(x.abs()));
            ss[j] <= rows.len() as f64 * (1e-12 * scale).powi(2)
        };
        if let Some(j) = (0..n_assets).find(|&j| flat(j)) {
            log::warn!("{month}: ZeroVariance for {}; skipped", table.tickers[j]);
            skipped.push(SkippedMonth {
                month,
                reason: format!("ZeroVariance: {}", table.tickers[j]),
            });
            continue;
        }
        let dof = (rows.len() - 1) as f64;
        let vols: Vec<f64> = ss.iter().map(|s| (s / dof * TRADING_DAYS).sqrt()).collect();
        let mut corrs = Vec::new();
        for i in 0..n_assets {
            for j in i + 1..n_assets {
                let cross: f64 = centered[i].iter().zip(&centered[j]).map(|(x, y)| x * y).sum();
                corrs.push((cross / (ss[i] * ss[j]).sqrt()).clamp(-1.0, 1.0));
            }
        }
        stats.push(MonthStat {
            month,
            rows: rows.len(),
            avg_volatility: mean(&vols),
            avg_correlation: mean(&corrs),
        });
    }
    (stats, skipped)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HuberFit {
    pub intercept: f64,
    pub slope: f64,
    pub delta: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

/// Huber regression of `y` on `x` by iteratively reweighted least squares.
/// Residuals are standardized by their normalized MAD. `None` when `x` has
/// no spread.
pub fn huber_fit(x: &[f64], y: &[f64]) -> Option<HuberFit> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mut w = vec![1.0; x.len()];
    let (mut b0, mut b1) = weighted_line(x, y, &w)?;
    for it in 1..=HUBER_MAX_ITER {
        let r: Vec<f64> = x.iter().zip(y).map(|(a, c)| c - b0 - b1 * a).collect();
        let med = median(&mut r.clone());
        let scale = median(&mut r.iter().map(|v| (v - med).abs()).collect::<Vec<_>>()) / 0.674_489_750_196_081_7;
        if !(scale > 0.0) {
            return Some(HuberFit { intercept: b0, slope: b1, delta: HUBER_DELTA, iterations: it, converged: true });
        }
        for (wi, ri) in w.iter_mut().zip(&r) {
            let u = (ri / scale).abs();
            *wi = if u <= HUBER_DELTA { 1.0 } else { HUBER_DELTA / u };
        }
        let (n0, n1) = weighted_line(x, y, &w)?;
        let done = (n0 - b0).abs() <= 1e-12 * (1.0 + b0.abs()) && (n1 - b1).abs() <= 1e-12 * (1.0 + b1.abs());
        (b0, b1) = (n0, n1);
        if done {
            return Some(HuberFit { intercept: b0, slope: b1, delta: HUBER_DELTA, iterations: it, converged: true });
        }
    }
    Some(HuberFit { intercept: b0, slope: b1, delta: HUBER_DELTA, iterations: HUBER_MAX_ITER, converged: false })
}

pub fn run(common: &Common, args: &VolCorrArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| input_error(format!("{}: {e}", args.input.display())))?;
    let table = ReturnsTable::parse(&text)?;
    if args.min_rows < 2 {
        return Err(input_error("--min-rows must be at least 2"));
    }
    let (stats, skipped) = monthly_stats(&table, args.min_rows);
    let mut out = Table::create(common.out.as_deref(), &["month", "avg_volatility", "avg_correlation"])?;
    for s in &stats {
        out.row(&[s.month.as_str().into(), s.avg_volatility.into(), s.avg_correlation.into()])?;
    }
    out.finish()?;

    let x: Vec<f64> = stats.iter().map(|s| s.avg_volatility).collect();
    let y: Vec<f64> = stats.iter().map(|s| s.avg_correlation).collect();
    let meta = json!({
        "annualization": "daily sample standard deviation (n-1) times sqrt(252)",
        "annualization_factor": TRADING_DAYS,
        "avg_volatility": "cross-sectional mean of annualized per-asset volatilities within the month",
        "avg_correlation": "mean Pearson correlation over unordered asset pairs within the month",
        "month_boundaries": "calendar month of the date column",
        "tickers": table.tickers,
        "rows_used": table.dates.len(),
        "rows_dropped": table.dropped_rows,
        "skipped_months": skipped,
        "huber_fit": huber_fit(&x, &y),
    });
    let meta_path = args
        .meta
        .clone()
        .or_else(|| common.out.as_ref().map(|p| PathBuf::from(format!("{}.meta.json", p.display()))));
    match meta_path {
        Some(p) => write_json(Some(&p), &meta),
        None => {
            let mut err = std::io::stderr().lock();
            writeln!(err, "{}", serde_json::to_string_pretty(&meta).map_err(|e| input_error(e.to_string()))?)?;
            Ok(())
        }
    }
}
