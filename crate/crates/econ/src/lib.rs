//! Estimators for facility-quarter panels: least squares and probit with
//! facility-clustered standard errors, plus the small helpers the analysis
//! needs (quantile buckets, increase indicators, lender betas).

mod design;
mod linalg;
mod ols;
mod probit;
mod stats;

pub use design::{Column, Design, Factor};
pub use linalg::{cholesky_solve, HouseholderQr};
pub use ols::{interaction_column, ols_clustered, RegressionResult};
pub use probit::{probit_clustered, MarginalEffect, ProbitOptions, ProbitResult};
pub use stats::{
    bucketize, increase_indicators, lender_beta, quantile_cut, significance_stars, two_sided_p, Coefficient,
};

/// Failure of an estimation routine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimationError {
    #[error("column {name} has {got} rows, expected {expected}")]
    DimensionMismatch { name: String, expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("{n} observations cannot identify {k} parameters")]
    InsufficientObservations { n: usize, k: usize },
    #[error("clustered standard errors need at least two clusters")]
    SingleCluster,
    #[error("dependent variable must be 0/1 with both outcomes present")]
    DegenerateOutcome,
    #[error("perfect separation on column {0}")]
    Separation(String),
    #[error("probit did not converge after {iterations} iterations: {trace}")]
    NonConvergence { iterations: usize, trace: String },
    #[error("zero variance in {0}")]
    ZeroVariance(String),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("fewer distinct values ({distinct}) than buckets ({buckets})")]
    TooFewDistinct { distinct: usize, buckets: usize },
    #[error("key regressor {0} is not in the model")]
    UnknownRegressor(String),
}
