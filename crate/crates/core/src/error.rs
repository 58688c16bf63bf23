use std::path::PathBuf;

use serde::Serialize;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The kernel matrix has a negative eigenvalue beyond tolerance, or too
    /// few positive eigenvalues for the requested truncation.
    #[error("degenerate kernel matrix: {0}")]
    DegenerateKernel(String),

    #[error("kernel-section anchors give a singular kernel matrix")]
    DegenerateAnchors,

    #[error("rank deficient: requested {requested} basis functions, only {available} eigenvalues above tolerance")]
    RankDeficient { requested: usize, available: usize },

    #[error("closed-form expected Gram not available: {0}")]
    UnsupportedClosedForm(String),

    #[error("normal equations are singular (smallest relative pivot {pivot:e})")]
    SingularNormalEquations { pivot: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("epsilon {epsilon} violates the feasibility condition")]
    InfeasibleEpsilon { epsilon: f64 },

    #[error("no feasible epsilon exists for E={e}, M={m}")]
    InfeasibleConfiguration { e: usize, m: usize },

    #[error("every tuning candidate failed to evaluate")]
    TuningFailed,

    #[error("insufficient data: need more than {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::InvalidInput(_) => "invalid-input",
            Error::DegenerateKernel(_) => "degenerate-kernel",
            Error::DegenerateAnchors => "degenerate-anchors",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::UnsupportedClosedForm(_) => "unsupported-closed-form",
            Error::SingularNormalEquations { .. } => "singular-normal-equations",
            Error::NumericalFailure(_) => "numerical-failure",
            Error::InfeasibleEpsilon { .. } => "infeasible-epsilon",
            Error::InfeasibleConfiguration { .. } => "infeasible-configuration",
            Error::TuningFailed => "tuning-failed",
            Error::InsufficientData { .. } => "insufficient-data",
            Error::InvalidTopology(_) => "invalid-topology",
            Error::Parse { .. } => "parse-error",
            Error::Io { .. } => "io-error",
            Error::Json(_) => "json-error",
            Error::Csv(_) => "csv-error",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// JSON document emitted by the CLI on failure.
    pub fn to_report(&self) -> ErrorReport {
        ErrorReport {
            error: self.kind(),
            message: self.to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
