use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the protocol library and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a mathematical precondition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} is outside the domain of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    /// The operation needs a capability the argument does not provide,
    /// e.g. exact output probabilities for an audit.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("all {n} users were dropped by the rejection step; nothing to aggregate")]
    AllUsersDropped { n: usize },

    /// An adaptive strategy proposed a query outside the admissible class.
    /// The query is never sent to users.
    #[error("round {round}: query has sup-norm {norm} which exceeds r = {r}")]
    QueryValidation { round: usize, norm: f64, r: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv encoding failed: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::domain(format!(
            "{what} has a non-finite entry at position {i}"
        ))),
    }
}
