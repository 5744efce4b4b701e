use thiserror::Error;

/// A failed command, classified by who has to act on it.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config file or settings.
    #[error("{0}")]
    Usage(String),
    /// Input data that cannot be used: missing files, bad FHIR, ineligible charts.
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Internal(_) => 3,
        }
    }

    pub fn usage(e: impl std::fmt::Display) -> Self {
        Self::Usage(e.to_string())
    }

    pub fn data(e: impl std::fmt::Display) -> Self {
        Self::Data(e.to_string())
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self::Internal(e.to_string())
    }
}
