use thiserror::Error;

use crate::spectrum::SpectrumError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or input data.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Numerical(#[from] dyadic_core::Error),

    #[error(transparent)]
    Spectrum(#[from] SpectrumError),

    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    /// `1` for configuration errors, `2` for failures during the run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}
