//! Configuration, model persistence and the command implementations behind
//! the `fermiborn` binary. Argument parsing lives in the binary itself.

pub mod commands;
pub mod config;
pub mod persist;

use crate::error::Error;

/// Success.
pub const EXIT_OK: i32 = 0;
/// Usage, configuration or input error.
pub const EXIT_USAGE: i32 = 2;
/// Numerical failure.
pub const EXIT_NUMERICAL: i32 = 3;

/// Stable mapping from library errors to process exit codes.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) | Error::TrainingAborted { .. } | Error::Sampling(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}
