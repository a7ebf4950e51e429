use thiserror::Error;

/// Failures mapped to stable exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Contract(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Config(_) => 3,
            CliError::Contract(_) => 4,
        }
    }
}

impl From<privehd::Error> for CliError {
    fn from(e: privehd::Error) -> Self {
        match e {
            privehd::Error::Io(e) => CliError::Io(e.to_string()),
            privehd::Error::Contract(_) => CliError::Contract(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
