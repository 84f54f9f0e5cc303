//! Command-line front end: configuration, runs, rendering and verification.

pub mod config;
pub mod render;
pub mod run;
pub mod verify;

pub use config::RunConfig;
pub use run::{execute, Command, ResultRecord};

use crate::error::Error;

/// Process exit status for an error: 2 for invalid input, 3 when bisection
/// cannot bracket the optimum, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::BracketError(_) => 3,
        Error::Io(_) | Error::Csv(_) => 1,
        _ => 2,
    }
}
