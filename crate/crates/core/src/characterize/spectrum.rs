use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::coherent::{coherent_frequency, cycles_in_record};
use super::enob_from_sndr;
use crate::error::{Error, Result};

/// Harmonics 2..=7 enter THD.
pub const DEFAULT_HARMONICS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumParams {
    pub fs: f64,
    pub f_in: f64,
    pub n_fft: usize,
    /// Highest harmonic order included in THD.
    pub n_harmonics: usize,
}

/// Dynamic metrics of one coherent record. THD and SFDR are dB below the carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMetrics {
    pub snr_db: f64,
    pub sndr_db: f64,
    pub thd_db: f64,
    pub sfdr_db: f64,
    pub enob: f64,
    pub fundamental_bin: usize,
    pub n_fft: usize,
    pub n_harmonics: usize,
    /// Carrier power relative to the mean-square of the record, dB.
    pub signal_power: f64,
}

/// One-sided power spectrum normalized so that the bins sum to the
/// mean-square value of `x` (rectangular window).
pub fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / (n as f64 * n as f64);
    let half = n / 2;
    (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() * scale;
            if k == 0 || (n.is_multiple_of(2) && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

fn alias_bin(cycles: u64, n: usize) -> usize {
    let r = (cycles % n as u64) as usize;
    if r > n / 2 {
        n - r
    } else {
        r
    }
}

/// SNR, SNDR, THD, SFDR and ENOB from the first `n_fft` samples of `codes`.
pub fn spectral_metrics(codes: &[f64], params: &SpectrumParams) -> Result<SpectralMetrics> {
    let n = params.n_fft;
    if !n.is_power_of_two() || n < 16 {
        return Err(Error::InvalidArgument(format!("n_fft must be a power of two >= 16, got {n}")));
    }
    if codes.len() < n {
        return Err(Error::TooShort { needed: n, got: codes.len() });
    }
    let non_coherent = || Error::NonCoherent {
        f_in: params.f_in,
        fs: params.fs,
        n_fft: n,
        suggested: coherent_frequency(params.fs, n, params.f_in)
            .map(|t| t.frequency)
            .unwrap_or(f64::NAN),
    };
    let cycles = cycles_in_record(params.fs, n, params.f_in).ok_or_else(non_coherent)?;
    let fund = alias_bin(cycles, n);
    if fund == 0 || fund == n / 2 {
        return Err(non_coherent());
    }

    let spectrum = power_spectrum(&codes[..n]);
    let p_fund = spectrum[fund];

    let mut harmonic_bins: Vec<usize> = (2..=params.n_harmonics as u64)
        .map(|h| alias_bin(h * cycles, n))
        .filter(|&b| b != 0 && b != fund)
        .collect();
    harmonic_bins.sort_unstable();
    harmonic_bins.dedup();
    let p_harm: f64 = harmonic_bins.iter().map(|&b| spectrum[b]).sum();

    let mut p_nd = 0.0;
    let mut p_spur: f64 = 0.0;
    for (k, &p) in spectrum.iter().enumerate().skip(1) {
        if k != fund {
            p_nd += p;
            p_spur = p_spur.max(p);
        }
    }
    let p_noise = (p_nd - p_harm).max(0.0);
    let db = |num: f64, den: f64| 10.0 * (num / den).log10();
    let sndr_db = db(p_fund, p_nd);
    let total: f64 = spectrum.iter().skip(1).sum();
    Ok(SpectralMetrics {
        snr_db: db(p_fund, p_noise),
        sndr_db,
        thd_db: db(p_fund, p_harm),
        sfdr_db: db(p_fund, p_spur),
        enob: enob_from_sndr(sndr_db),
        fundamental_bin: fund,
        n_fft: n,
        n_harmonics: params.n_harmonics,
        signal_power: db(p_fund, total),
    })
}
