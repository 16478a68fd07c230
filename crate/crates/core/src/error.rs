//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input object failed structural validation (wrong length, bad
    /// probability mass, malformed text, ...).
    #[error("validation failed: {0}")]
    Validation(String),

    /// A numeric parameter is outside its admissible range.
    #[error("parameter out of range: {0}")]
    Parameter(String),

    /// A requested configuration is internally consistent but cannot be
    /// satisfied (e.g. parameter inequalities with no solution).
    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    /// A computation was refused because it would exceed a hard resource
    /// guard (memory or enumeration size).
    #[error("resource guard tripped: {0}")]
    Resource(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Convenience constructor for validation errors.
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Convenience constructor for parameter-range errors.
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Convenience constructor for infeasible-configuration errors.
    pub fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }

    /// Convenience constructor for resource-guard errors.
    pub fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }
}
