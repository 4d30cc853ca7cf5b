//! Portfolio allocation for CARA investors who are uncertain about the
//! covariance matrix and the expected returns of their assets.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod block;
pub mod distributions;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod quadrature;
pub mod scenario;
pub mod solver;
pub mod types;
pub mod univariate;
pub mod wishart_alloc;

pub use error::{Error, Result};
pub use types::{
    apply_transaction_cost, cara_utility, gaussian_expected_utility, CovMatrix, LogValue,
    PortfolioProblem, ProblemDoc, ReturnBeliefs, TransactionCost, Weights,
};
