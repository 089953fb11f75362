//! Error classes and their stable exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or command-line usage (exit 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// The run itself failed (exit 3).
    #[error("runtime error: {0}")]
    Runtime(String),
    /// A measurement precondition does not hold (exit 4).
    #[error("measurement precondition failed: {0}")]
    Precondition(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Precondition(_) => 4,
        }
    }
}

impl From<capflash::Error> for CliError {
    fn from(e: capflash::Error) -> Self {
        use capflash::Error as E;
        match e {
            E::NonCoherent { suggested, .. } => CliError::Precondition(format!(
                "{e}; use stimulus.frequency = {suggested:e} or set stimulus.coherent = true"
            )),
            E::InsufficientSamples { recommended, .. } => CliError::Precondition(format!(
                "{e}; set characterize.histogram_samples >= {recommended}"
            )),
            E::NotFullScale(_) | E::TooShort { .. } | E::NoCrossing => CliError::Precondition(e.to_string()),
            E::InvalidTopology(_) | E::InvalidModel(_) | E::InvalidSweep(_) | E::InvalidArgument(_) => {
                CliError::Config(e.to_string())
            }
            E::DimensionMismatch(_) | E::PhaseOrderViolation | E::NonDecodable | E::MalformedStream(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
