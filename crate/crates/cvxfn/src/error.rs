//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CvxError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("{context}: value must be finite")]
    NonFinite { context: &'static str },

    #[error("{0} must be non-empty")]
    Empty(&'static str),

    #[error("{context}: expected a positive value, got {value}")]
    NonPositive { context: &'static str, value: f64 },

    #[error("lengths differ: {left} points vs {right} values")]
    LengthMismatch { left: usize, right: usize },

    #[error(
        "data inconsistency at pair ({i}, {j}): |y_{i} - y_{j}| = {value_gap} \
         exceeds L * dist = {lipschitz_allowance}; no {lipschitz}-Lipschitz \
         function interpolates these samples"
    )]
    DataInconsistency {
        i: usize,
        j: usize,
        value_gap: f64,
        lipschitz_allowance: f64,
        lipschitz: f64,
    },

    #[error("net candidate budget of {budget} points exceeded (needed about {required})")]
    CandidateBudget { budget: usize, required: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("training aborted at iteration {iteration}: non-finite loss in {block}")]
    NonFiniteLoss { iteration: usize, block: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CvxError>;
