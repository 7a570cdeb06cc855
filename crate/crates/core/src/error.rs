use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("candidate solution is infeasible: {0}")]
    InfeasibleCandidate(String),

    #[error("observer log too short: window needs index {needed}, log has {available}")]
    LogTooShort { needed: usize, available: usize },

    #[error("cost increase at t={t}, budget {budget}: suboptimal cost {suboptimal:e} > candidate cost {candidate:e}")]
    CostIncrease {
        t: usize,
        budget: String,
        suboptimal: f64,
        candidate: f64,
    },

    #[error("no decay rate on the grid admits finite envelope constants")]
    EnvelopeUnfittable,

    #[error("at t={t}, budget {budget}: {source}")]
    Step {
        t: usize,
        budget: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Configuration-class failures (bad input files, unreadable paths) as
    /// opposed to numeric failures during a run.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Io { .. } | Error::Json(_) => true,
            Error::Step { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

pub(crate) fn check_finite(context: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context.to_string()))
    }
}
