//! Command-line front end for the `gram-spectra` experiments.
//!
//! Exit codes: 0 on success, 1 on a validation error, 2 on a numerical
//! failure (too many overflowed or censored trials).

pub mod args;
pub mod config;
pub mod output;
pub mod run;

pub use config::{load_config, ExperimentConfig};
pub use run::{render, run, RunOptions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<gram_spectra::Error> for CliError {
    fn from(e: gram_spectra::Error) -> Self {
        match e {
            gram_spectra::Error::NonFinite { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}
