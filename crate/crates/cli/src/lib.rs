//! Command-line front end for the finite-key rate calculator: configuration
//! files, single-point rates, distance sweeps, source optimization and the
//! channel-model check.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(String),
    /// The analytic channel model disagrees with the Monte-Carlo simulation.
    #[error("model validation failed: {0}")]
    ModelMismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ModelMismatch(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl From<mdiqkd_core::Error> for CliError {
    fn from(e: mdiqkd_core::Error) -> Self {
        use mdiqkd_core::Error as E;
        match e {
            E::Config { field, message } => CliError::Config(format!("{field}: {message}")),
            E::Domain(m) => CliError::Config(m),
            E::Solver(m) => CliError::Solver(m),
            E::Infeasible(reason) => CliError::Solver(reason.to_string()),
            E::Io(m) => CliError::Io(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
