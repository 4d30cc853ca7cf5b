use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Parser)]
#[command(name = "covalloc", version, about = "Portfolio allocation under covariance and expected-return uncertainty")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every stochastic command.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Solver tolerance on the scaled projected-gradient norm.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter", global = true)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one allocation problem (or a univariate sweep).
    Allocate(AllocateArgs),
    /// Tabulate the scaling function g(q, α).
    Scaling(ScalingArgs),
    /// Draw shifted-gamma variance samples and report volatilities.
    Sample(SampleArgs),
    /// Draw 2-D Wishart matrices and report volatilities and correlation.
    WishartSim(WishartSimArgs),
    /// Tabulate posterior densities of volatility or correlation.
    Posterior(PosteriorArgs),
    /// Monthly average volatility and correlation from daily returns.
    VolCorr(VolCorrArgs),
    /// Run the Monte Carlo and deterministic validation suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Univariate,
    Wishart,
    Block1,
    Block2,
    TwoState,
    Minimax,
    MinVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Constraints {
    None,
    LongOnly,
    Simplex,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    /// Problem JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Normal-state probability (two-state, min-variance).
    #[arg(long)]
    pub p: Option<f64>,
    /// Risk weight of the minimax objective.
    #[arg(long)]
    pub b: Option<f64>,
    /// Ridge penalty of the min-variance objective.
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    #[arg(long = "risk-aversion")]
    pub risk_aversion: Option<f64>,
    /// Wishart degrees of freedom (wishart).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum, default_value_t = Constraints::None)]
    pub constraints: Constraints,
    /// Solve Model 2 over block totals.
    #[arg(long)]
    pub reduce: bool,
    #[arg(long = "sweep-mu0", value_delimiter = ',')]
    pub sweep_mu0: Option<Vec<f64>>,
    #[arg(long = "sweep-alpha", value_delimiter = ',')]
    pub sweep_alpha: Option<Vec<f64>>,
    #[arg(long = "sweep-sigma0-sq", value_delimiter = ',')]
    pub sweep_sigma0_sq: Option<Vec<f64>>,
    /// Asymptotic regime reported in a sweep; all regimes when omitted.
    #[arg(long)]
    pub regime: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalingModel {
    Wishart,
    Laplace,
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    #[arg(long = "q-grid", value_delimiter = ',', default_value = "0.01,0.1,1,10,100")]
    pub q_grid: Vec<f64>,
    #[arg(long = "alpha-grid", value_delimiter = ',', default_value = "1,10,100,1000")]
    pub alpha_grid: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ScalingModel::Wishart)]
    pub model: ScalingModel,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long = "sigma-min", default_value_t = 0.1)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 0.15)]
    pub sigma: f64,
    #[arg(long, default_value_t = 100.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct WishartSimArgs {
    #[arg(long = "sigma-a", default_value_t = 0.2)]
    pub sigma_a: f64,
    #[arg(long = "sigma-b", default_value_t = 0.4)]
    pub sigma_b: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PosteriorKind {
    Volatility,
    Correlation,
}

#[derive(Debug, Args)]
pub struct PosteriorArgs {
    #[arg(long, value_enum)]
    pub kind: PosteriorKind,
    /// Sample sizes; defaults depend on `--kind`.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<u32>>,
    /// Sample volatilities (volatility kind).
    #[arg(long, value_delimiter = ',')]
    pub s: Option<Vec<f64>>,
    /// Sample correlations (correlation kind).
    #[arg(long, value_delimiter = ',')]
    pub r: Option<Vec<f64>>,
    /// Grid points per curve.
    #[arg(long, default_value_t = 400)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct VolCorrArgs {
    /// Daily returns CSV: `date,<ticker>,...`.
    #[arg(long)]
    pub input: PathBuf,
    /// Minimum rows for a month to be used.
    #[arg(long = "min-rows", default_value_t = 15)]
    pub min_rows: usize,
    /// Metadata JSON; `<out>.meta.json` or stderr when omitted.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long = "n-samples", default_value_t = 100_000)]
    pub n_samples: usize,
    /// Relative bias injected into the scaling function (mutation testing).
    #[arg(long = "g-bias", default_value_t = 0.0, allow_hyphen_values = true)]
    pub g_bias: f64,
}
