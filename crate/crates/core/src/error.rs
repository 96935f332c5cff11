//! Error types shared across the solver crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or configuration parameter is outside its admissible range.
    #[error("config error: {0}")]
    Config(String),

    /// An argument violated an operation's domain (e.g. nonpositive temperature).
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an API contract (e.g. face average on a boundary face).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The integrator produced a non-finite or negative state it cannot recover from.
    #[error("step failure at t'={time}: {reason}")]
    StepFailure { time: f64, reason: String },

    /// Internal inconsistency in assembled systems.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
