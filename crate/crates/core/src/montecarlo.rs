//! Mismatch draws, trial ensembles and the interpolation-averaging experiment.
//!
//! Trial `i` of an ensemble always uses `derive_seed(master_seed, i)`, and
//! results are collected in trial order, so statistics do not depend on how
//! trials are scheduled across threads.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analog::{AnalogChain, DeviceInstance, MismatchModel, Stimulus};
use crate::backend::{Converter, LatchModel};
use crate::characterize::{coherent_frequency, histogram_linearity, linearity_from_thresholds, LinearityReport};
use crate::error::Result;
use crate::rng::{derive_seed, rng_from_seed, STREAM_DEVICE};
use crate::topology::AdcTopology;

fn gaussians<R: Rng>(n: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * sigma
        })
        .collect()
}

/// Independent Gaussian draws for every mismatch source of one device.
pub fn draw_instance(model: &MismatchModel, topology: &AdcTopology, seed: u64) -> DeviceInstance {
    let mut rng = rng_from_seed(derive_seed(seed, STREAM_DEVICE));
    let cap_ratio_errors = gaussians(topology.front_end_amps, model.sigma_cap_ratio, &mut rng);
    let amp_offsets = topology
        .stage_amp_counts
        .iter()
        .map(|&n| gaussians(n, model.sigma_amp_offset, &mut rng))
        .collect();
    let comp_offsets = gaussians(topology.comparator_count(), model.sigma_comp_offset, &mut rng);
    DeviceInstance {
        seed,
        amp_offsets,
        comp_offsets,
        cap_ratio_errors,
    }
}

/// Pass limits on peak |DNL| and |INL|, LSB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YieldLimits {
    pub dnl: f64,
    pub inl: f64,
}

impl Default for YieldLimits {
    fn default() -> Self {
        Self { dnl: 0.4, inl: 0.6 }
    }
}

/// Opt-in waveform-level histogram measurement for each trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramTrial {
    pub latch: LatchModel,
    pub fs: f64,
    pub f_target: f64,
    pub n_samples: usize,
    /// Sine amplitude relative to half the full scale.
    pub overdrive: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub topology: AdcTopology,
    pub model: MismatchModel,
    pub limits: YieldLimits,
    pub histogram: Option<HistogramTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub index: u64,
    pub seed: u64,
    pub peak_dnl: f64,
    pub peak_inl: f64,
    /// RMS deviation of the comparator thresholds from ideal, LSB.
    pub threshold_rms: f64,
    pub histogram_peak_dnl: Option<f64>,
    pub histogram_peak_inl: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEnsemble {
    pub n_trials: u64,
    pub master_seed: u64,
    pub limits: YieldLimits,
    pub yield_fraction: f64,
    pub mean_peak_dnl: f64,
    pub mean_peak_inl: f64,
    pub max_peak_dnl: f64,
    pub max_peak_inl: f64,
    /// Pooled sigma of comparator threshold errors over all trials, LSB.
    pub threshold_error_sigma: f64,
    pub trials: Vec<TrialSummary>,
}

/// Comparator thresholds measured through the full clipped chain by bisection.
pub fn measured_thresholds(chain: &mut AnalogChain) -> Vec<f64> {
    let topo = chain.topology().clone();
    let margin = topo.full_scale() / 4.0;
    (0..topo.comparator_count())
        .map(|j| chain.swept_threshold(j, topo.v_refn - margin, topo.v_refp + margin))
        .collect()
}

fn histogram_trial(spec: &EnsembleSpec, hist: &HistogramTrial, instance: &DeviceInstance, seed: u64) -> Result<LinearityReport> {
    let topo = &spec.topology;
    let conv = Converter::new(topo, &spec.model, instance, &hist.latch)?;
    let n_fft = hist.n_samples.next_power_of_two();
    let tone = coherent_frequency(hist.fs, n_fft, hist.f_target)?;
    let signal = Stimulus::Sine {
        frequency: tone.frequency,
        amplitude: hist.overdrive * topo.full_scale() / 2.0,
        offset: (topo.v_refn + topo.v_refp) / 2.0,
        phase: 0.0,
    };
    let codes: Vec<u8> = conv
        .run_record(&signal, hist.fs, hist.n_samples, seed)
        .iter()
        .map(|s| s.binary)
        .collect();
    histogram_linearity(&codes, topo.n_codes())
}

fn run_trial(spec: &EnsembleSpec, index: u64, master_seed: u64) -> Result<TrialSummary> {
    let topo = &spec.topology;
    let seed = derive_seed(master_seed, index);
    let instance = draw_instance(&spec.model, topo, seed);
    let mut chain = AnalogChain::new(topo, &spec.model, &instance)?;
    let thresholds = chain.analytic_thresholds();
    let report = linearity_from_thresholds(&thresholds, topo.n_codes())?;
    let lsb = topo.lsb();
    let ideal = topo.comparator_thresholds();
    let threshold_rms = (thresholds
        .iter()
        .zip(&ideal)
        .map(|(t, i)| ((t - i) / lsb).powi(2))
        .sum::<f64>()
        / thresholds.len() as f64)
        .sqrt();
    let hist = match &spec.histogram {
        Some(h) => Some(histogram_trial(spec, h, &instance, seed)?),
        None => None,
    };
    let (check_dnl, check_inl) = match &hist {
        Some(h) => (h.peak_dnl, h.peak_inl),
        None => (report.peak_dnl, report.peak_inl),
    };
    Ok(TrialSummary {
        index,
        seed,
        peak_dnl: report.peak_dnl,
        peak_inl: report.peak_inl,
        threshold_rms,
        histogram_peak_dnl: hist.as_ref().map(|h| h.peak_dnl),
        histogram_peak_inl: hist.as_ref().map(|h| h.peak_inl),
        pass: check_dnl <= spec.limits.dnl && check_inl <= spec.limits.inl,
    })
}

/// Runs `n_trials` independent devices on the current rayon pool.
pub fn run_ensemble(spec: &EnsembleSpec, n_trials: u64, master_seed: u64) -> Result<TrialEnsemble> {
    if n_trials == 0 {
        return Err(crate::Error::InvalidArgument("n_trials must be >= 1".into()));
    }
    let trials = (0..n_trials)
        .into_par_iter()
        .map(|i| run_trial(spec, i, master_seed))
        .collect::<Result<Vec<_>>>()?;
    let n = n_trials as f64;
    let passed = trials.iter().filter(|t| t.pass).count();
    let mean = |f: fn(&TrialSummary) -> f64| trials.iter().map(f).sum::<f64>() / n;
    let max = |f: fn(&TrialSummary) -> f64| trials.iter().map(f).fold(0.0, f64::max);
    let pooled = (trials.iter().map(|t| t.threshold_rms.powi(2)).sum::<f64>() / n).sqrt();
    Ok(TrialEnsemble {
        n_trials,
        master_seed,
        limits: spec.limits,
        yield_fraction: passed as f64 / n,
        mean_peak_dnl: mean(|t| t.peak_dnl),
        mean_peak_inl: mean(|t| t.peak_inl),
        max_peak_dnl: max(|t| t.peak_dnl),
        max_peak_inl: max(|t| t.peak_inl),
        threshold_error_sigma: pooled,
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AveragingOutcome {
    Ratio {
        parent_sigma: f64,
        interpolated_sigma: f64,
        ratio: f64,
    },
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingReport {
    pub n_trials: u64,
    pub stage: usize,
    pub outcome: AveragingOutcome,
}

fn sample_sigma(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Compares the zero-crossing spread of the nodes created by the first
/// interpolation network with that of their parent (front-end) nodes.
pub fn averaging_experiment(model: &MismatchModel, topology: &AdcTopology, n_trials: u64, master_seed: u64) -> Result<AveragingReport> {
    let stage = 1;
    if topology.n_stages() < 2 || n_trials < 2 {
        return Ok(AveragingReport {
            n_trials,
            stage,
            outcome: AveragingOutcome::NotApplicable,
        });
    }
    let per_trial = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let inst = draw_instance(model, topology, derive_seed(master_seed, i));
            AnalogChain::new(topology, model, &inst)?.interpolation_node_errors(stage)
        })
        .collect::<Result<Vec<_>>>()?;
    let parents: Vec<f64> = per_trial.iter().flat_map(|(p, _)| p.iter().copied()).collect();
    let interpolated: Vec<f64> = per_trial.iter().flat_map(|(_, m)| m.iter().copied()).collect();
    let parent_sigma = sample_sigma(&parents);
    let interpolated_sigma = sample_sigma(&interpolated);
    let outcome = if parent_sigma > 0.0 && parent_sigma.is_finite() {
        AveragingOutcome::Ratio {
            parent_sigma,
            interpolated_sigma,
            ratio: interpolated_sigma / parent_sigma,
        }
    } else {
        AveragingOutcome::NotApplicable
    };
    Ok(AveragingReport { n_trials, stage, outcome })
}
