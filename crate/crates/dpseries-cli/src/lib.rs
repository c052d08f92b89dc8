//! Orchestration for the `dpseries` command: configuration, caching,
//! bundled data, the classification pipeline and table output.

pub mod cache;
pub mod config;
pub mod data;
pub mod pipeline;
pub mod tables;

use dpseries::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_ASSERTION: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_RESOURCE: i32 = 4;

/// Process exit code for an engine error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Assertion(_) => EXIT_ASSERTION,
        Error::Config(_)
        | Error::Dimension { .. }
        | Error::Precondition(_)
        | Error::RuleNotApplicable(_)
        | Error::Singular { .. }
        | Error::Ramified(_) => EXIT_CONFIG,
        Error::ResourceExhausted { .. } => EXIT_RESOURCE,
        Error::Overflow(_) | Error::Io(_) | Error::Format(_) => EXIT_FAILURE,
    }
}
