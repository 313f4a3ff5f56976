//! CLI error taxonomy with the stable exit-code contract:
//! 0 success, 1 input error, 2 backend failure, 3 capability mismatch.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad inputs: missing files, malformed lines, invalid parameters.
    Input(String),
    /// The generation backend failed.
    Backend(String),
    /// The backend lacks a capability the run needs (e.g. logprobs).
    Capability(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Backend(_) => 2,
            CliError::Capability(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Backend(m) => write!(f, "backend failure: {m}"),
            CliError::Capability(m) => write!(f, "capability mismatch: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
