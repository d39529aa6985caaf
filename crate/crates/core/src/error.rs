use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid range [{low}, {high})")]
    InvalidRange { low: f64, high: f64 },
    #[error("{what} must be positive")]
    NonPositive { what: &'static str },
    #[error("row {row} of the probability matrix sums to {sum}, not 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("probability at row {row}, column {col} is {value}, outside [0, 1]")]
    ProbabilityOutOfRange { row: usize, col: usize, value: f64 },
    #[error("cost of action {index} is negative ({value})")]
    NegativeCost { index: usize, value: f64 },
    #[error("payment for outcome {index} is negative ({value})")]
    NegativePayment { index: usize, value: f64 },
    #[error("valuation of outcome {index} is negative ({value})")]
    NegativeValuation { index: usize, value: f64 },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("action index {index} out of range for {count} actions")]
    ActionOutOfRange { index: usize, count: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("bound for variable {index} has lo > hi")]
    InvalidBounds { index: usize },
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("distribution recovery called on a rejected log")]
    RejectedLog,
    #[error("no valid accepted logs to infer agent strategies")]
    NoAcceptedLogs,
    #[error("clustering needs at least one point and k >= 1")]
    EmptyClustering,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("target action {target} is not a non-default action of a {count}-action setting")]
    InvalidTarget { target: usize, count: usize },
    #[error("grid of {cells} cells exceeds the budget of {budget}")]
    GridTooLarge { cells: f64, budget: usize },
    #[error("grid step and cap must be positive and finite")]
    InvalidGrid,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] LpError),
}
