//! Library face of the tikhoflow command-line tool. The binary in main.rs
//! is a thin argument layer over these modules; tests drive them directly.

pub mod compare;
pub mod config;
pub mod pipeline;
pub mod presets;

use tikhoflow_core::Error;

/// Command-level failure split by exit code: configuration and usage
/// problems exit 2, runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        match e {
            Error::Config(_) | Error::UnsupportedProblem(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<pipeline::PhaseError> for CliError {
    fn from(e: pipeline::PhaseError) -> CliError {
        if e.config_class {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}
