//! The measurements behind each subcommand, independent of file output.
//!
//! Every random stream is derived from the configuration seed, a per-command
//! tag and a point or trial index, and parallel work is collected in input
//! order, so results do not depend on the size of the worker pool.

use capflash::characterize::{
    coherent_frequency, erbw, histogram_linearity, power_spectrum, spectral_metrics, LinearityReport, SpectralMetrics,
    SpectrumParams,
};
use capflash::montecarlo::{averaging_experiment, draw_instance, run_ensemble, AveragingReport, EnsembleSpec, HistogramTrial, TrialEnsemble};
use capflash::rng::derive_seed;
use capflash::stream::{CodeRecord, CodeStream, StreamMeta};
use capflash::backend::downsample;
use capflash::{AdcTopology, Converter, DeviceInstance, Stimulus};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, Waveform};
use crate::error::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const TAG_SIMULATE: u64 = 1;
const TAG_LINEARITY: u64 = 2;
const TAG_SPECTRUM: u64 = 3;
const TAG_SWEEP_FSIGNAL: u64 = 4;
const TAG_SWEEP_FSAMPLE: u64 = 5;
const TAG_AVERAGING: u64 = 6;

/// ENOB pass mark for sample-rate sweeps.
pub const ENOB_TARGET: f64 = 5.0;

fn noise_seed(cfg: &RunConfig, tag: u64, index: u64) -> u64 {
    derive_seed(derive_seed(cfg.seed, tag), index)
}

/// The device under test: topology plus the mismatch draw of `cfg.seed`.
pub struct Device {
    pub topology: AdcTopology,
    pub instance: DeviceInstance,
}

impl Device {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let topology = cfg.topology()?;
        let instance = draw_instance(&cfg.mismatch, &topology, cfg.seed);
        Ok(Self { topology, instance })
    }

    pub fn converter(&self, cfg: &RunConfig, fs: f64) -> Result<Converter, CliError> {
        Ok(Converter::new(&self.topology, &cfg.mismatch, &self.instance, &cfg.latch.model(fs))?)
    }
}

/// Coherent tone nearest `f` for an `n`-point record at `fs`, or `f` itself
/// when snapping is disabled.
fn tone(cfg: &RunConfig, fs: f64, n: usize, f: f64) -> Result<f64, CliError> {
    if cfg.stimulus.coherent {
        Ok(coherent_frequency(fs, n, f)?.frequency)
    } else {
        Ok(f)
    }
}

/// Stimulus of the `simulate` record, with sine frequencies snapped to the
/// output record when coherence is requested.
pub fn simulation_signal(cfg: &RunConfig, topo: &AdcTopology) -> Result<Stimulus, CliError> {
    let s = &cfg.stimulus;
    match (s.waveform, s.frequency) {
        (Waveform::Sine, Some(f)) if s.coherent => {
            let fs_out = s.fs / s.decimation as f64;
            Ok(s.sine_at(topo, tone(cfg, fs_out, s.n_fft(), f)?))
        }
        _ => s.signal(topo),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<CodeStream, CliError> {
    let dev = Device::new(cfg)?;
    let s = &cfg.stimulus;
    let signal = simulation_signal(cfg, &dev.topology)?;
    let conv = dev.converter(cfg, s.fs)?;
    let samples = conv.run_record(&signal, s.fs, s.n_samples, noise_seed(cfg, TAG_SIMULATE, 0));
    let kept = downsample(&samples, s.decimation as usize)?;
    Ok(CodeStream {
        meta: StreamMeta {
            tool_version: TOOL_VERSION.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            fs: s.fs,
            decimation: s.decimation,
            config: cfg.canonical(),
        },
        records: kept.samples.iter().map(CodeRecord::from).collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearityRun {
    pub fs: f64,
    pub f_in: f64,
    pub n_samples: usize,
    pub report: LinearityReport,
}

fn require_sine(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.stimulus.waveform != Waveform::Sine {
        return Err(CliError::Precondition(format!(
            "the histogram method requires a sine stimulus, got {:?}",
            cfg.stimulus.waveform
        )));
    }
    Ok(())
}

/// Sine-histogram DNL/INL from a fresh record.
pub fn linearity(cfg: &RunConfig) -> Result<LinearityRun, CliError> {
    require_sine(cfg)?;
    let dev = Device::new(cfg)?;
    let topo = &dev.topology;
    let c = &cfg.characterize;
    let s = &cfg.stimulus;
    let n = c.histogram_samples;
    let f_target = c.histogram_frequency.or(s.frequency).expect("sine has a frequency");
    let f_in = tone(cfg, s.fs, n.next_power_of_two(), f_target)?;
    let signal = Stimulus::Sine {
        frequency: f_in,
        amplitude: c.histogram_overdrive * topo.full_scale() / 2.0,
        offset: s.offset.unwrap_or((topo.v_refn + topo.v_refp) / 2.0),
        phase: s.phase,
    };
    let conv = dev.converter(cfg, s.fs)?;
    let codes: Vec<u8> = conv
        .run_record(&signal, s.fs, n, noise_seed(cfg, TAG_LINEARITY, 0))
        .iter()
        .map(|r| r.binary)
        .collect();
    Ok(LinearityRun {
        fs: s.fs,
        f_in,
        n_samples: n,
        report: histogram_linearity(&codes, topo.n_codes())?,
    })
}

/// Sine-histogram DNL/INL of a recorded stream; its embedded configuration
/// must describe a sine.
pub fn linearity_of_stream(stream: &CodeStream, cfg: &RunConfig) -> Result<LinearityRun, CliError> {
    require_sine(cfg)?;
    let topo = cfg.topology()?;
    let codes = stream.binary_codes();
    let signal = simulation_signal(cfg, &topo)?;
    let f_in = match signal {
        Stimulus::Sine { frequency, .. } => frequency,
        _ => unreachable!("checked above"),
    };
    Ok(LinearityRun {
        fs: stream.meta.fs / stream.meta.decimation as f64,
        f_in,
        n_samples: codes.len(),
        report: histogram_linearity(&codes, topo.n_codes())?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRun {
    pub fs: f64,
    pub f_in: f64,
    pub metrics: SpectralMetrics,
    /// One-sided power per bin relative to the carrier, dB.
    pub spectrum_dbc: Vec<f64>,
}

fn spectrum_of(codes: &[f64], fs: f64, f_in: f64, n_fft: usize, n_harmonics: usize) -> Result<SpectrumRun, CliError> {
    let metrics = spectral_metrics(
        codes,
        &SpectrumParams {
            fs,
            f_in,
            n_fft,
            n_harmonics,
        },
    )?;
    let p = power_spectrum(&codes[..n_fft]);
    let carrier = p[metrics.fundamental_bin];
    Ok(SpectrumRun {
        fs,
        f_in,
        metrics,
        spectrum_dbc: p.iter().map(|&v| 10.0 * (v / carrier).log10()).collect(),
    })
}

/// One coherent record at `fs` and metrics of its first `n_fft` samples.
fn spectrum_point(cfg: &RunConfig, dev: &Device, fs: f64, f_target: f64, seed: u64) -> Result<SpectrumRun, CliError> {
    let n_fft = cfg.stimulus.n_fft();
    let f_in = tone(cfg, fs, n_fft, f_target)?;
    let conv = dev.converter(cfg, fs)?;
    let signal = cfg.stimulus.sine_at(&dev.topology, f_in);
    let codes: Vec<f64> = conv
        .run_record(&signal, fs, n_fft, seed)
        .iter()
        .map(|r| r.binary as f64)
        .collect();
    spectrum_of(&codes, fs, f_in, n_fft, cfg.characterize.n_harmonics)
}

pub fn spectrum(cfg: &RunConfig) -> Result<SpectrumRun, CliError> {
    if cfg.stimulus.waveform != Waveform::Sine {
        return Err(CliError::Precondition("spectrum mode requires a sine stimulus".into()));
    }
    let dev = Device::new(cfg)?;
    let f = cfg.stimulus.frequency.expect("sine has a frequency");
    spectrum_point(cfg, &dev, cfg.stimulus.fs, f, noise_seed(cfg, TAG_SPECTRUM, 0))
}

pub fn spectrum_of_stream(stream: &CodeStream, cfg: &RunConfig) -> Result<SpectrumRun, CliError> {
    if cfg.stimulus.waveform != Waveform::Sine {
        return Err(CliError::Precondition("spectrum mode requires a sine stimulus".into()));
    }
    let topo = cfg.topology()?;
    let f_in = match simulation_signal(cfg, &topo)? {
        Stimulus::Sine { frequency, .. } => frequency,
        _ => unreachable!("checked above"),
    };
    let codes: Vec<f64> = stream.records.iter().map(|r| r.binary as f64).collect();
    let fs = stream.meta.fs / stream.meta.decimation as f64;
    spectrum_of(&codes, fs, f_in, cfg.stimulus.n_fft(), cfg.characterize.n_harmonics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Fsignal,
    Fsample,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub fs: f64,
    pub f_in: f64,
    pub metrics: Option<SpectralMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub axis: Axis,
    pub points: Vec<SweepPoint>,
    /// Effective resolution bandwidth (signal-frequency sweeps).
    pub erbw: Option<f64>,
    pub erbw_error: Option<String>,
    /// Highest sample rate reached before ENOB first drops below the target
    /// (sample-rate sweeps).
    pub max_fs_enob_target: Option<f64>,
    pub enob_target: f64,
}

/// `n` evenly spaced points spanning the ends of `base`.
pub fn respace(base: &[f64], n: usize) -> Result<Vec<f64>, CliError> {
    if base.len() < 2 {
        return Err(CliError::Config("--points needs a configured sweep with at least two points".into()));
    }
    let (a, b) = (base[0], base[base.len() - 1]);
    if n < 2 {
        return Ok(vec![a; n]);
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

/// Signal- or sample-rate sweep with one device and one independent noise
/// stream per point.
pub fn sweep(cfg: &RunConfig, axis: Axis, points: Option<usize>) -> Result<SweepRun, CliError> {
    let base = match axis {
        Axis::Fsignal => &cfg.sweep.fsignal,
        Axis::Fsample => &cfg.sweep.fsample,
    };
    let values = match points {
        Some(n) => respace(base, n)?,
        None => base.clone(),
    };
    if values.len() < 3 {
        return Err(CliError::Config(format!("a sweep needs at least 3 points, got {}", values.len())));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) || values[0] <= 0.0 {
        return Err(CliError::Config("sweep points must be positive and strictly increasing".into()));
    }
    if cfg.stimulus.waveform != Waveform::Sine {
        return Err(CliError::Precondition("sweeps require a sine stimulus".into()));
    }
    let dev = Device::new(cfg)?;
    let f_fixed = match axis {
        Axis::Fsignal => 0.0,
        Axis::Fsample => cfg
            .sweep
            .fsample_signal
            .or(cfg.stimulus.frequency)
            .expect("sine has a frequency"),
    };
    let tag = match axis {
        Axis::Fsignal => TAG_SWEEP_FSIGNAL,
        Axis::Fsample => TAG_SWEEP_FSAMPLE,
    };
    let results: Vec<SweepPoint> = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let (fs, f) = match axis {
                Axis::Fsignal => (cfg.stimulus.fs, v),
                Axis::Fsample => (v, f_fixed),
            };
            match spectrum_point(cfg, &dev, fs, f, noise_seed(cfg, tag, i as u64)) {
                Ok(run) => SweepPoint {
                    index: i,
                    fs,
                    f_in: run.f_in,
                    metrics: Some(run.metrics),
                    error: None,
                },
                Err(e) => SweepPoint {
                    index: i,
                    fs,
                    f_in: f,
                    metrics: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut run = SweepRun {
        axis,
        points: results,
        erbw: None,
        erbw_error: None,
        max_fs_enob_target: None,
        enob_target: ENOB_TARGET,
    };
    match axis {
        Axis::Fsignal => {
            let curve: Vec<(f64, f64)> = run
                .points
                .iter()
                .filter_map(|p| p.metrics.as_ref().map(|m| (p.f_in, m.sndr_db)))
                .collect();
            match erbw(&curve) {
                Ok(f) => run.erbw = Some(f),
                Err(e) => run.erbw_error = Some(e.to_string()),
            }
        }
        Axis::Fsample => {
            run.max_fs_enob_target = run
                .points
                .iter()
                .take_while(|p| p.metrics.as_ref().is_some_and(|m| m.enob >= ENOB_TARGET))
                .last()
                .map(|p| p.fs);
        }
    }
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloRun {
    pub ensemble: TrialEnsemble,
    pub averaging: AveragingReport,
}

pub fn montecarlo(cfg: &RunConfig, trials: Option<u64>) -> Result<MonteCarloRun, CliError> {
    let topology = cfg.topology()?;
    let n_trials = trials.unwrap_or(cfg.montecarlo.trials);
    let histogram = if cfg.montecarlo.histogram {
        require_sine(cfg)?;
        let c = &cfg.characterize;
        Some(HistogramTrial {
            latch: cfg.latch.model(cfg.stimulus.fs),
            fs: cfg.stimulus.fs,
            f_target: c.histogram_frequency.or(cfg.stimulus.frequency).expect("sine has a frequency"),
            n_samples: c.histogram_samples,
            overdrive: c.histogram_overdrive,
        })
    } else {
        None
    };
    let spec = EnsembleSpec {
        topology: topology.clone(),
        model: cfg.mismatch.clone(),
        limits: cfg.montecarlo.limits,
        histogram,
    };
    Ok(MonteCarloRun {
        ensemble: run_ensemble(&spec, n_trials, cfg.seed)?,
        averaging: averaging_experiment(&cfg.mismatch, &topology, n_trials, derive_seed(cfg.seed, TAG_AVERAGING))?,
    })
}
