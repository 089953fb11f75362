use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid model parameter: {0}")]
    InvalidModel(String),

    #[error("device instance does not match topology: {0}")]
    DimensionMismatch(String),

    #[error("amplification phase requested before the input was sampled")]
    PhaseOrderViolation,

    #[error("thermometer word is not decodable by first-order correction")]
    NonDecodable,

    #[error("input frequency {f_in} Hz is not coherent with fs={fs} Hz, n_fft={n_fft} (nearest coherent tone: {suggested} Hz)")]
    NonCoherent {
        f_in: f64,
        fs: f64,
        n_fft: usize,
        suggested: f64,
    },

    #[error("record too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("insufficient samples for histogram test: DNL confidence bound {bound:.3} LSB exceeds {limit} LSB (use at least {recommended} samples)")]
    InsufficientSamples {
        bound: f64,
        limit: f64,
        recommended: usize,
    },

    #[error("stimulus does not cover the full conversion range: {0}")]
    NotFullScale(String),

    #[error("SNDR never drops 3 dB below the low-frequency value within the sweep")]
    NoCrossing,

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed code stream: {0}")]
    MalformedStream(String),
}
