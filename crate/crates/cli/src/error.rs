use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config, or inputs; nothing was computed.
    #[error("{0}")]
    Usage(String),

    /// A run completed but a check did not pass.
    #[error("{0}")]
    CheckFailed(String),

    #[error(transparent)]
    Core(#[from] skewlevy::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use skewlevy::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::CheckFailed(_) => 1,
            CliError::Core(E::InvalidInput(_) | E::Parse(_) | E::Io(_) | E::Unsupported(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

pub fn io_err(what: &str, path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{what} {}: {e}", path.display()))
}
