//! Batch front-end: dataset generation, training, evaluation and cost
//! reports, driven by a `key = value` configuration file.

pub mod commands;
pub mod config;

pub use config::{Problem, RunConfig};

use gitnet_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error{}: {msg}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },

    #[error("I/O error: {0}")]
    Io(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io(_) | CoreError::Format { .. } => CliError::Io(e.to_string()),
            CoreError::NonFinite(_)
            | CoreError::NonFiniteLoss { .. }
            | CoreError::SolverResidual { .. }
            | CoreError::ZeroNormTarget { .. } => CliError::Numeric(e.to_string()),
            CoreError::ShapeMismatch { .. } | CoreError::InvalidArgument(_) => {
                CliError::Config { line: None, msg: e.to_string() }
            }
        }
    }
}

/// CSV float formatting: 17 significant digits, round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
