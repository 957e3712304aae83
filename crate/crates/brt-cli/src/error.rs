use thiserror::Error;

/// CLI failures, classified for the exit-status contract:
/// usage errors exit 2, data errors 3, numeric failures 4.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<brt::Error> for CliError {
    fn from(e: brt::Error) -> Self {
        use brt::Error::*;
        match e {
            NonFiniteLikelihood | NotPositiveDefinite => CliError::Numeric(e.to_string()),
            InvalidHyper(_) | InvalidArgument(_) | LeafBound { .. } | GpSizeGuard { .. }
            | PartitionBound { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
