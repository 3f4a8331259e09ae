use thiserror::Error;

use crate::spectral::DecompositionResult;

#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("tensor of {requested} elements exceeds the element budget of {budget}")]
    SizeLimit { requested: u128, budget: usize },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate point{}: {reason}", .row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Degenerate { row: Option<usize>, reason: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("power iteration breakdown: contraction T(I,u,u) vanished")]
    Breakdown,

    #[error("found {found} of {requested} requested components")]
    PartialResult {
        found: usize,
        requested: usize,
        result: Box<DecompositionResult<f64>>,
    },

    #[error("rank deficient: eigenvalue {index} is {value:e}, below {threshold:e}")]
    RankDeficient {
        index: usize,
        value: f64,
        threshold: f64,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn degenerate(reason: impl Into<String>) -> Self {
        Error::Degenerate {
            row: None,
            reason: reason.into(),
        }
    }

    /// Attaches a dataset row index to a degeneracy error.
    pub(crate) fn at_row(self, row: usize) -> Self {
        match self {
            Error::Degenerate { reason, .. } => Error::Degenerate {
                row: Some(row),
                reason,
            },
            other => other,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command-line front end:
    /// 2 for validation problems, 3 for numeric or degeneracy failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_)
            | Error::SizeLimit { .. }
            | Error::Validation(_)
            | Error::Unsupported(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::Degenerate { .. }
            | Error::NonFinite(_)
            | Error::Breakdown
            | Error::PartialResult { .. }
            | Error::RankDeficient { .. }
            | Error::Fit(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
