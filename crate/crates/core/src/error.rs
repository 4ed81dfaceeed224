use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("metric violation: {0}")]
    Metric(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A runtime invariant failed. `check` names the violated property.
    #[error("internal invariant `{check}` failed: {detail}")]
    Internal { check: String, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn internal(check: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Internal {
            check: check.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
