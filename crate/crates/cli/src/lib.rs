//! Experiment harness for `dsac`: config parsing, training runs with CSV
//! metrics and checkpoints, SVG plots, and the oracle check battery.

pub mod checks;
pub mod config;
pub mod metrics;
pub mod plot;
pub mod run;

use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    /// The problem is too large for the exact oracles.
    #[error("{0}")]
    OracleCap(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::OracleCap(_) => 3,
        }
    }

    pub(crate) fn from_oracle(e: dsac::Error) -> Self {
        match e.root() {
            dsac::Error::Oracle(_) => CliError::OracleCap(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }

    pub(crate) fn io(what: &str, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{what}: {e}"))
    }
}

/// Threads requested through `DSAC_THREADS`; unset means sequential.
pub fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var("DSAC_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!("DSAC_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}
