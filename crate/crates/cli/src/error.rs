use thiserror::Error;

/// Failures mapped onto the process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, values or preconditions (exit 2).
    #[error("usage: {0}")]
    Usage(String),
    /// Estimation or invariant failure (exit 1).
    #[error("{0}")]
    Failure(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<solvgeo_core::Error> for CliError {
    fn from(e: solvgeo_core::Error) -> Self {
        use solvgeo_core::Error as E;
        match e {
            E::DimensionMismatch { .. }
            | E::EmptyParams
            | E::NonFinite(_)
            | E::InvalidArgument(_)
            | E::ZeroRate(_)
            | E::DegeneratePlane => CliError::Usage(e.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failure(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Failure(format!("csv: {e}"))
    }
}
