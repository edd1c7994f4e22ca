use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("policy evaluation did not converge (Bellman residual {residual:.3e})")]
    NotConverged { residual: f64 },

    #[error("singular linear system while solving for {0}")]
    Singular(&'static str),

    #[error("environment diverged: {0}")]
    Diverged(String),

    #[error("score is undefined for a zero-density action")]
    ZeroDensity,

    #[error("action {action} in state {state} lies outside the sampling support")]
    SupportViolation { state: usize, action: usize },

    #[error("non-finite behavior score at state {state}, action {action}")]
    NonFiniteScore { state: usize, action: usize },

    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
