use thiserror::Error;

use crate::model::Violation;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("category {category} outside [1, {d}]")]
    CategoryOutOfRange { category: u64, d: usize },

    #[error("dimension mismatch: expected d = {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("need at least {required} records, got {actual}")]
    TooFewRecords { required: usize, actual: usize },

    /// An observed category has zero covariate mass in the supplied nuisances.
    #[error("nuisance covariate mass missing for category {}", .category + 1)]
    MissingCovariateMass { category: usize },

    /// An observed category has a propensity of 0 (or 1) where the estimator divides by it.
    #[error("propensity is degenerate for category {}", .category + 1)]
    DegeneratePropensity { category: usize },

    /// A weight with nonzero numerator and zero denominator; only external nuisances
    /// that contradict the data can trigger this.
    #[error("undefined inverse weight for category {}", .category + 1)]
    UndefinedWeight { category: usize },

    #[error("propensity denominator must be positive, got {0}")]
    NonPositiveDenominator(f64),

    #[error("malformed file {path}: {reason}")]
    Parse { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
