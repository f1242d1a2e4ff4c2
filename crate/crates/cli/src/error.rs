use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config files or names; exit status 2.
    #[error("{0}")]
    Usage(String),

    /// The computation itself failed; exit status 1.
    #[error(transparent)]
    Domain(#[from] robust_dde::Error),

    /// The run finished but its result does not meet its own checks.
    #[error("{0}")]
    Rejected(String),

    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),

    #[error("writing output: {0}")]
    Csv(#[from] csv::Error),

    #[error("writing output: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
