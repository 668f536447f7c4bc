//! CLI error taxonomy mapped to exit codes: 2 for validation problems
//! (bad flags, bad input files, infeasible requests), 3 for transport
//! failures reaching external endpoints.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Transport(_) => 3,
        }
    }

    pub fn validation(msg: impl fmt::Display) -> Self {
        CliError::Validation(msg.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Transport(m) => write!(f, "transport: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
