//! Command-line driver: configuration, run orchestration and output files.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 input shape error,
//! 4 not converged, 5 numerical failure, 6 gradient check failure.

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;

use std::path::Path;

pub use commands::{evaluate, grad_check, homogenize, optimize, GradCheckOptions};
pub use config::{load, parse, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SHAPE: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;
pub const EXIT_GRAD_CHECK: i32 = 6;

/// Failure carrying the process exit code.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn shape(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_SHAPE,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError {
            code: EXIT_NUMERICAL,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl From<metatopo::Error> for CliError {
    fn from(e: metatopo::Error) -> Self {
        use metatopo::Error as E;
        let code = match e {
            E::InvalidInput(_) => EXIT_CONFIG,
            E::ShapeMismatch { .. } => EXIT_SHAPE,
            E::Singular(_) | E::SolverDiverged { .. } | E::NonFinite(_) => EXIT_NUMERICAL,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}
