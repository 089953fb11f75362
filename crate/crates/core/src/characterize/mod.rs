//! Converter metrology: coherent test-tone selection, FFT dynamic metrics,
//! sine-histogram linearity, ERBW extraction and the figure of merit.

mod coherent;
mod figures;
mod histogram;
mod spectrum;

pub use coherent::{coherent_frequency, cycles_in_record, CoherentTone};
pub use figures::{erbw, fom, FomInput};
pub use histogram::{
    histogram_confidence_bound, histogram_linearity, linearity_from_thresholds, LinearityReport,
    DNL_CONFIDENCE_LIMIT,
};
pub use spectrum::{power_spectrum, spectral_metrics, SpectralMetrics, SpectrumParams, DEFAULT_HARMONICS};

/// ENOB from SNDR in dB.
pub fn enob_from_sndr(sndr_db: f64) -> f64 {
    (sndr_db - 1.76) / 6.02
}
