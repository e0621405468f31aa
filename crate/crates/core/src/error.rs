use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: expected {expected} fields, found {found}")]
    Structural {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset has no data rows")]
    EmptyDataset,

    #[error("column `{0}` has no non-missing values")]
    AllMissing(String),

    #[error("unknown feature `{name}`; available: {}", available.join(", "))]
    UnknownFeature {
        name: String,
        available: Vec<String>,
    },

    #[error("value `{value}` is not in the domain of `{feature}`")]
    UnknownValue { feature: String, value: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("state error: {0}")]
    State(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code for the error family.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Structural { .. } => "structural",
            Error::Schema(_) => "schema",
            Error::EmptyDataset => "empty_dataset",
            Error::AllMissing(_) => "all_missing",
            Error::UnknownFeature { .. } => "unknown_feature",
            Error::UnknownValue { .. } => "unknown_value",
            Error::Validation(_) => "validation",
            Error::Parse(_) => "parse",
            Error::NotFound(_) => "not_found",
            Error::State(_) => "state",
            Error::Numerical(_) => "numerical",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// True for errors caused by the caller's input rather than by the engine.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::Io(_) | Error::Json(_))
    }
}
