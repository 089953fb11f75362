use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest acceptable 3-sigma per-code DNL uncertainty, LSB.
pub const DNL_CONFIDENCE_LIMIT: f64 = 0.1;

/// Per-code static linearity. `dnl[k]` is the width error of code `k` and
/// `inl[k]` the deviation of the transition at the top of code `k`, both in
/// LSB against the line through the first and last transitions. End codes
/// carry zero and are excluded from the peak statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub dnl: Vec<f64>,
    pub inl: Vec<f64>,
    pub peak_dnl: f64,
    pub peak_inl: f64,
    pub histogram: Vec<u64>,
    pub missing_codes: Vec<usize>,
    /// Fitted sine amplitude and offset in LSB (histogram method only).
    pub fitted_amplitude: Option<f64>,
    pub fitted_offset: Option<f64>,
}

fn finish(widths: Vec<f64>, histogram: Vec<u64>, fit: Option<(f64, f64)>) -> LinearityReport {
    // widths[k] is the relative width of code k for the interior codes.
    let n = widths.len();
    let mean = widths[1..n - 1].iter().sum::<f64>() / (n - 2) as f64;
    let mut dnl = vec![0.0; n];
    for k in 1..n - 1 {
        dnl[k] = widths[k] / mean - 1.0;
    }
    let mut inl = vec![0.0; n];
    let mut acc = 0.0;
    for k in 1..n {
        acc += dnl[k];
        inl[k] = acc;
    }
    let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let missing_codes = (1..n - 1).filter(|&k| widths[k] <= 0.0).collect();
    LinearityReport {
        peak_dnl: peak(&dnl[1..n - 1]),
        peak_inl: peak(&inl),
        dnl,
        inl,
        histogram,
        missing_codes,
        fitted_amplitude: fit.map(|f| f.0),
        fitted_offset: fit.map(|f| f.1),
    }
}

/// Linearity from the transition levels of the comparator row.
/// `thresholds[j]` is the input where the output first reaches code `j + 1`;
/// the top comparator (folded onto the last code) is ignored.
pub fn linearity_from_thresholds(thresholds: &[f64], n_codes: usize) -> Result<LinearityReport> {
    if thresholds.len() + 1 < n_codes || n_codes < 3 {
        return Err(Error::InvalidArgument(format!(
            "{} thresholds cannot describe {n_codes} codes",
            thresholds.len()
        )));
    }
    let mut widths = vec![0.0; n_codes];
    for k in 1..n_codes - 1 {
        widths[k] = thresholds[k] - thresholds[k - 1];
    }
    Ok(finish(widths, vec![0; n_codes], None))
}

/// 3-sigma relative counting uncertainty of the least populated interior code.
pub fn histogram_confidence_bound(n_samples: usize, amplitude_lsb: f64) -> f64 {
    // the arcsine density is lowest at the center: N / (pi * A) hits per LSB
    let min_count = n_samples as f64 / (PI * amplitude_lsb);
    3.0 / min_count.sqrt()
}

/// Sine-histogram DNL/INL. Amplitude and offset of the stimulus are fitted
/// from the two end-code counts assuming the first and last transitions sit
/// at their ideal positions; each interior code is compared against the
/// arcsine-density count it should receive.
pub fn histogram_linearity(codes: &[u8], n_codes: usize) -> Result<LinearityReport> {
    if n_codes < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 codes, got {n_codes}")));
    }
    let mut histogram = vec![0u64; n_codes];
    for &c in codes {
        let c = c as usize;
        if c >= n_codes {
            return Err(Error::InvalidArgument(format!("code {c} out of range 0..{n_codes}")));
        }
        histogram[c] += 1;
    }
    let total = codes.len() as f64;
    let last = n_codes - 1;
    if histogram[0] == 0 || histogram[last] == 0 {
        return Err(Error::NotFullScale(format!(
            "end codes received {} and {} hits; the sine must overdrive both ends",
            histogram[0], histogram[last]
        )));
    }
    let c_lo = (PI * histogram[0] as f64 / total).cos();
    let c_hi = (PI * histogram[last] as f64 / total).cos();
    let span = (last - 1) as f64;
    let amplitude = span / (c_lo + c_hi);
    let offset = 1.0 + amplitude * c_lo;
    if !(amplitude.is_finite() && amplitude >= span / 2.0) {
        return Err(Error::NotFullScale(format!("fitted amplitude {amplitude:.3} LSB")));
    }

    let bound = histogram_confidence_bound(codes.len(), amplitude);
    if bound > DNL_CONFIDENCE_LIMIT {
        let recommended = (total * (bound / DNL_CONFIDENCE_LIMIT).powi(2)).ceil() as usize;
        return Err(Error::InsufficientSamples {
            bound,
            limit: DNL_CONFIDENCE_LIMIT,
            recommended,
        });
    }

    let cdf = |x: f64| ((x - offset) / amplitude).clamp(-1.0, 1.0).asin();
    let mut widths = vec![0.0; n_codes];
    for k in 1..last {
        let ideal = total / PI * (cdf((k + 1) as f64) - cdf(k as f64));
        widths[k] = histogram[k] as f64 / ideal;
    }
    Ok(finish(widths, histogram, Some((amplitude, offset))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_codes(n: usize, cycles: u64, thresholds: &[f64], amp: f64, offset: f64) -> Vec<u8> {
        (0..n)
            .map(|i| {
                let v = offset + amp * (std::f64::consts::TAU * cycles as f64 * i as f64 / n as f64).sin();
                thresholds.iter().take(63).filter(|&&t| v > t).count() as u8
            })
            .collect()
    }

    fn ideal_thresholds() -> Vec<f64> {
        (1..=64).map(|k| k as f64).collect()
    }

    #[test]
    fn inl_is_prefix_sum_of_dnl() {
        let mut t = ideal_thresholds();
        t[10] += 0.3;
        t[40] -= 0.2;
        let r = linearity_from_thresholds(&t, 64).unwrap();
        let mut acc = 0.0;
        for k in 0..64 {
            acc += r.dnl[k];
            assert_eq!(r.inl[k], acc);
        }
        assert!(r.dnl[1..63].iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn threshold_shift_gives_dnl_pair() {
        let mut t = ideal_thresholds();
        t[20] += 0.5;
        let r = linearity_from_thresholds(&t, 64).unwrap();
        assert!((r.dnl[20] - 0.5).abs() < 1e-12);
        assert!((r.dnl[21] + 0.5).abs() < 1e-12);
        assert!((r.peak_dnl - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ideal_sine_histogram() {
        let n = 1 << 18;
        let codes = sine_codes(n, 4099, &ideal_thresholds(), 32.2, 32.0);
        let r = histogram_linearity(&codes, 64).unwrap();
        assert!(r.peak_dnl < 0.05, "{}", r.peak_dnl);
        assert!((r.fitted_amplitude.unwrap() - 32.2).abs() < 0.01);
        assert!((r.fitted_offset.unwrap() - 32.0).abs() < 0.01);
    }

    #[test]
    fn histogram_errors() {
        let codes = sine_codes(1 << 18, 4099, &ideal_thresholds(), 20.0, 32.0);
        assert!(matches!(histogram_linearity(&codes, 64), Err(Error::NotFullScale(_))));
        let codes = sine_codes(4096, 1023, &ideal_thresholds(), 32.5, 32.0);
        match histogram_linearity(&codes, 64) {
            Err(Error::InsufficientSamples { recommended, .. }) => assert!(recommended > 4096),
            other => panic!("{other:?}"),
        }
    }
}
