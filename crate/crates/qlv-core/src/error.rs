//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by state construction, channel application, analysis and
/// the protocol simulator.
#[derive(Debug, Error)]
pub enum QlvError {
    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An operation would exceed the configured qubit/dimension limits.
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    /// An argument is outside its documented domain (index, probability, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A value violates a structural invariant (Hermiticity, completeness, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A caller-side contract was violated (e.g. mixed reference state).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Protocol steps were invoked out of order or twice.
    #[error("protocol order error: {0}")]
    ProtocolOrder(String),

    /// Not enough unconsumed pairs to carry out a protocol step.
    #[error("resource error: {0}")]
    Resource(String),

    /// A message referenced unknown or already-consumed pair labels.
    #[error("protocol corruption: {0}")]
    Corruption(String),

    /// Scenario or curve configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QlvError>;
