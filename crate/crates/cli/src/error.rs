use glgcrn_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config keys or missing prerequisites.
    #[error("{0}")]
    Usage(String),

    /// A solver stopped at its iteration cap; artifacts were still written.
    #[error("{0}")]
    NotConverged(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::NotConverged(_) => 2,
            CliError::Core(CoreError::Numeric(_) | CoreError::Training { .. }) => 2,
            CliError::Core(_) => 1,
        }
    }
}
