//! Behavioral model of a 6-bit capacitive-interpolation flash ADC with a
//! distributed front-end sample-and-hold, plus the measurement harness used
//! to characterize it (histogram DNL/INL, coherent-FFT dynamic metrics,
//! ERBW, figure of merit and Monte Carlo yield).
//!
//! The signal path is split the same way the hardware is:
//!
//! - [`topology`]: static architecture (interpolation factors, gains,
//!   capacitive reference division).
//! - [`analog`]: two-phase analog chain from the continuous-time input to
//!   the comparator-row input voltages.
//! - [`backend`]: latches, bubble correction, 1-of-N and Gray encoding.
//! - [`characterize`]: converter metrology.
//! - [`montecarlo`]: mismatch draws and trial ensembles.

pub mod analog;
pub mod backend;
pub mod characterize;
pub mod error;
pub mod montecarlo;
pub mod rng;
pub mod stream;
pub mod topology;

pub use analog::{AnalogChain, DeviceInstance, LatchInputs, MismatchModel, Stimulus};
pub use backend::{CodeSample, Converter, LatchModel};
pub use error::{Error, Result};
pub use topology::{AdcTopology, TopologyConfig};
