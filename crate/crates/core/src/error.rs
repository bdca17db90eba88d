use std::io;

use thiserror::Error;

/// Errors raised anywhere in the simulate → panel → estimate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument outside its mathematical domain (e.g. a nonpositive variance).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration or input value failed validation. `field` names the offender.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    /// No usable (g, t) cell could be estimated.
    #[error("design not identified at (g={g}, t={t}): {reason}")]
    Identification { g: u32, t: u32, reason: String },

    /// Logistic fit hit (quasi-)complete separation.
    #[error("separation detected in propensity fit (covariate `{covariate}`)")]
    Separation { covariate: String },

    #[error("design matrix is rank deficient (rank {rank} of {columns})")]
    RankDeficient { rank: usize, columns: usize },

    /// The requested experiment cannot distinguish its arms.
    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
