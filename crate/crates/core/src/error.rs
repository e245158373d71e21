use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why the analysis cannot certify any key for a given data set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Infeasibility {
    /// The sources violate the decoy conditions.
    DecoyConditions,
    /// `σ_A^x + σ_B^x ≥ 1`.
    SigmaSumX,
    /// `σ_A^y + σ_B^y ≥ 1`.
    SigmaSumY,
    /// The lower bound on the vacuum-involving error term exceeds its upper bound.
    EmptyHRange,
    /// The minimum over the error term is not positive.
    NonPositiveRate,
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Infeasibility::DecoyConditions => "decoy conditions violated",
            Infeasibility::SigmaSumX => "sigma_A^x + sigma_B^x >= 1",
            Infeasibility::SigmaSumY => "sigma_A^y + sigma_B^y >= 1",
            Infeasibility::EmptyHRange => "empty range for H",
            Infeasibility::NonPositiveRate => "no positive key rate",
        })
    }
}

/// Errors raised by the analysis pipeline.
///
/// "No key at this distance" is not an error: the key-rate engine reports it
/// as a zero rate with a reason code instead.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violates an invariant of its type.
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    /// A numerical solver failed to converge.
    #[error("solver failure: {0}")]
    Solver(String),

    /// The data admit no key; carries the reason.
    #[error("analysis infeasible: {0}")]
    Infeasible(Infeasibility),

    /// Reading or writing a fixture failed.
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
