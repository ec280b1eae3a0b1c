use std::fmt;
use std::process::ExitCode;

use mind_core::BackendError;

/// A failed command. The variant decides the exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad or unreadable input data, or a run that errored. Exit 1.
    Data(String),
    /// Bad flags, configuration or credentials. Exit 2.
    Config(String),
}

impl CliError {
    pub fn data(msg: impl fmt::Display) -> Self {
        CliError::Data(msg.to_string())
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Data(_) => ExitCode::from(1),
            CliError::Config(_) => ExitCode::from(2),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Data(m) => write!(f, "error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
        }
    }
}

/// Credential and configuration failures are config errors; the rest concern the data.
impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::AuthMissing(_) | BackendError::InvalidConfig(_) => CliError::config(e),
            _ => CliError::data(e),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
