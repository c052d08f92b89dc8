use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Unknown Coxeter label, bad point, bad word and similar user input.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected rank {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A branching rule was asked to fire where its guard fails.
    #[error("rule not applicable: {0}")]
    RuleNotApplicable(String),

    /// A replayed assertion does not hold.
    #[error("assertion mismatch: {0}")]
    Assertion(String),

    /// A simple intertwiner factor hits the pole z = -1.
    #[error("singular intertwiner factor at simple root {root} (z = {z})")]
    Singular { root: usize, z: String },

    /// Hecke computations only handle unramified characters.
    #[error("ramified character not supported: {0}")]
    Ramified(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Storage ran out; the manifest at `checkpoint` records the progress made.
    #[error("resource exhausted ({reason}); checkpoint written to {}", checkpoint.display())]
    ResourceExhausted { reason: String, checkpoint: PathBuf },

    #[error("malformed data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
