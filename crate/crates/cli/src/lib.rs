//! Command-line front end: problem loading, model dispatch, sweeps,
//! figure data and the validation suite.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocate;
pub mod args;
pub mod figures;
pub mod output;
pub mod validate;
pub mod volcorr;

use covalloc::solver::SolverOptions;

pub use args::{Cli, Command, Common};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Library(#[from] covalloc::Error),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0} validation check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    /// 2 for solver failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Library(covalloc::Error::Convergence { .. }) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn input_error(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

impl Common {
    pub fn solver_options(&self) -> SolverOptions {
        let mut opts = SolverOptions::default();
        if let Some(tol) = self.tol {
            opts = opts.with_tol(tol);
        }
        if let Some(m) = self.max_iter {
            opts = opts.with_max_iter(m);
        }
        opts
    }
}

/// Parses `args` (program name first) and runs the command in-process.
pub fn run_args<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = Cli::try_parse_from(args).map_err(|e| input_error(e.to_string()))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let common = &cli.common;
    if let Some(tol) = common.tol {
        if !(tol > 0.0) || !tol.is_finite() {
            return Err(input_error("--tol must be positive"));
        }
    }
    match &cli.command {
        Command::Allocate(a) => allocate::run(common, a),
        Command::Scaling(a) => figures::scaling(common, a),
        Command::Sample(a) => figures::sample(common, a),
        Command::WishartSim(a) => figures::wishart_sim(common, a),
        Command::Posterior(a) => figures::posterior(common, a),
        Command::VolCorr(a) => volcorr::run(common, a),
        Command::Validate(a) => validate::run(common, a),
    }
}

/// Rejects empty or non-finite grids.
pub(crate) fn check_grid(name: &str, grid: &[f64]) -> CliResult<()> {
    if grid.is_empty() {
        return Err(input_error(format!("--{name}: grid is empty")));
    }
    if let Some(x) = grid.iter().find(|x| !x.is_finite()) {
        return Err(input_error(format!("--{name}: non-finite value {x}")));
    }
    Ok(())
}
