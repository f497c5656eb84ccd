use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the chronology engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state space too large: {n_s} states/year x {m} years overflows")]
    Sizing { n_s: usize, m: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// The data have zero probability under the model (e.g. unreachable tie-points).
    #[error("model is infeasible for the data: {0}")]
    Infeasible(String),

    #[error("objective is not finite at the initial point (offending parameter: {parameter})")]
    NonFiniteInit { parameter: String },

    #[error("inference failed: {0}")]
    Inference(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
