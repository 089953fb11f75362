use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency where SNDR first falls 3 dB below its value at the lowest swept
/// frequency, linearly interpolated between the bracketing points.
/// `sweep` holds `(f_in, sndr_db)` pairs sorted by frequency.
pub fn erbw(sweep: &[(f64, f64)]) -> Result<f64> {
    if sweep.len() < 3 {
        return Err(Error::InvalidSweep(format!("need at least 3 points, got {}", sweep.len())));
    }
    if sweep.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidSweep("points must be sorted by increasing frequency".into()));
    }
    if sweep.iter().any(|p| !p.0.is_finite() || p.1.is_nan()) {
        return Err(Error::InvalidSweep("non-finite sweep point".into()));
    }
    let line = sweep[0].1 - 3.0;
    for w in sweep.windows(2) {
        let (f0, s0) = w[0];
        let (f1, s1) = w[1];
        if s1 <= line {
            if s1 == line || s0 == s1 {
                return Ok(f1);
            }
            return Ok(f0 + (f1 - f0) * (s0 - line) / (s0 - s1));
        }
    }
    Err(Error::NoCrossing)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FomInput {
    /// Watts.
    pub power: f64,
    /// Effective bits at low input frequency.
    pub enob_dc: f64,
    /// Hertz.
    pub erbw: f64,
}

impl FomInput {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("power", self.power), ("enob_dc", self.enob_dc), ("erbw", self.erbw)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Energy per conversion step, joules: `P / (2^ENOB_DC * 2 * ERBW)`.
pub fn fom(input: &FomInput) -> f64 {
    input.power / (input.enob_dc.exp2() * 2.0 * input.erbw)
}
