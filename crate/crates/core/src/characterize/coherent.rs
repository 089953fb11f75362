use serde::Serialize;

use crate::error::{Error, Result};

/// A test tone with an integer, odd number of cycles in the FFT record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherentTone {
    pub cycles: u64,
    pub frequency: f64,
}

/// Nearest tone to `f_target` with an odd cycle count `M` in an `n_fft`-sample
/// record at `fs`. Odd `M` is coprime to the power-of-two record length, so
/// every sample lands on a distinct phase. Targets above `fs/2` are allowed
/// (undersampling); the tone then aliases onto bin `M mod n_fft`.
pub fn coherent_frequency(fs: f64, n_fft: usize, f_target: f64) -> Result<CoherentTone> {
    if !n_fft.is_power_of_two() || n_fft < 4 {
        return Err(Error::InvalidArgument(format!("n_fft must be a power of two >= 4, got {n_fft}")));
    }
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::InvalidArgument(format!("fs must be positive, got {fs}")));
    }
    if !(f_target > 0.0 && f_target.is_finite()) {
        return Err(Error::InvalidArgument(format!("target frequency must be positive, got {f_target}")));
    }
    let x = f_target * n_fft as f64 / fs;
    let k = ((x - 1.0) / 2.0).round().max(0.0);
    let cycles = 2 * k as u64 + 1;
    Ok(CoherentTone {
        cycles,
        frequency: cycles as f64 * fs / n_fft as f64,
    })
}

/// Number of input cycles in an `n_fft` record, if it is an integer.
pub fn cycles_in_record(fs: f64, n_fft: usize, f_in: f64) -> Option<u64> {
    let x = f_in * n_fft as f64 / fs;
    let m = x.round();
    ((x - m).abs() <= 1e-6 * x.max(1.0) && m >= 1.0).then_some(m as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_setups() {
        let t = coherent_frequency(600e6, 4096, 51e6).unwrap();
        assert_eq!(t.cycles, 349);
        assert!((t.frequency - 51.123046875e6).abs() < 1.0);

        // 121e6 * 8192 / 1.2e9 = 826.03; 827 is the nearest odd count.
        let t = coherent_frequency(1.2e9, 8192, 121e6).unwrap();
        assert_eq!(t.cycles, 827);
        assert!((t.frequency - 121.142578125e6).abs() < 1.0);
    }

    #[test]
    fn small_case_enumeration() {
        let t = coherent_frequency(8.0, 8, 2.0).unwrap();
        assert!(t.cycles == 1 || t.cycles == 3);
        assert_eq!(coherent_frequency(8.0, 8, 0.01).unwrap().cycles, 1);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(coherent_frequency(1e9, 1000, 1e6).is_err());
        assert!(coherent_frequency(1e9, 1024, 0.0).is_err());
        assert!(coherent_frequency(0.0, 1024, 1e6).is_err());
    }

    #[test]
    fn always_odd_and_near() {
        for i in 1..500 {
            let f = i as f64 * 1.37e6;
            let t = coherent_frequency(1e9, 2048, f).unwrap();
            assert_eq!(t.cycles % 2, 1);
            assert!((t.frequency - f).abs() <= 1e9 / 2048.0 * 1.0 + 1e-3);
            assert_eq!(cycles_in_record(1e9, 2048, t.frequency), Some(t.cycles));
        }
    }
}
