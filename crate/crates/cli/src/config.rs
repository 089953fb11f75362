//! Run configuration file (TOML, schema `capflash.config/1`).
//!
//! Every section rejects unknown keys. Sections other than `[stimulus]` may
//! be omitted and then take the ideal/nominal defaults. Named
//! `[operating_points.NAME]` tables override a handful of values and are
//! selected with `--operating-point`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use capflash::montecarlo::YieldLimits;
use capflash::topology::build_topology;
use capflash::{AdcTopology, LatchModel, MismatchModel, Stimulus, TopologyConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CONFIG_SCHEMA: &str = "capflash.config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub seed: u64,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub mismatch: MismatchModel,
    #[serde(default)]
    pub latch: LatchConfig,
    pub stimulus: StimulusConfig,
    #[serde(default)]
    pub characterize: CharacterizeConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub montecarlo: MonteCarloConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub operating_points: BTreeMap<String, OperatingPoint>,
}

/// Regenerative latch. Without `regen_tau` the latch is ideal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatchConfig {
    pub regen_tau: Option<f64>,
    /// Fixed regeneration time, seconds. Excludes `clock_overhead`.
    pub decide_time: Option<f64>,
    /// Part of the half clock period not available for regeneration, seconds.
    pub clock_overhead: Option<f64>,
    #[serde(default)]
    pub relatch_stages: u32,
    #[serde(default = "default_swing")]
    pub v_swing: f64,
}

fn default_swing() -> f64 {
    0.75
}

impl Default for LatchConfig {
    fn default() -> Self {
        Self {
            regen_tau: None,
            decide_time: None,
            clock_overhead: None,
            relatch_stages: 0,
            v_swing: default_swing(),
        }
    }
}

impl LatchConfig {
    /// Latch model when clocked at `fs`.
    pub fn model(&self, fs: f64) -> LatchModel {
        match (self.regen_tau, self.decide_time) {
            (None, _) => LatchModel::ideal(),
            (Some(tau), Some(t)) => LatchModel {
                regen_tau: tau,
                decide_time: t,
                relatch_stages: self.relatch_stages,
                v_swing: self.v_swing,
            },
            (Some(tau), None) => {
                LatchModel::clocked(tau, fs, self.clock_overhead.unwrap_or(0.0), self.relatch_stages, self.v_swing)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    Sine,
    Ramp,
    Dc,
}

/// Test signal and record. Amplitude and offset default to a full-scale
/// sine centred between the references; a ramp defaults to one LSB beyond
/// each reference over the whole record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusConfig {
    pub waveform: Waveform,
    pub fs: f64,
    pub n_samples: usize,
    pub frequency: Option<f64>,
    pub amplitude: Option<f64>,
    pub offset: Option<f64>,
    #[serde(default)]
    pub phase: f64,
    pub level: Option<f64>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    /// FFT length for spectrum measurements; defaults to `n_samples`.
    pub n_fft: Option<usize>,
    /// Snap sine frequencies to the nearest coherent tone.
    #[serde(default = "yes")]
    pub coherent: bool,
    #[serde(default = "one")]
    pub decimation: u32,
}

fn yes() -> bool {
    true
}

fn one() -> u32 {
    1
}

impl StimulusConfig {
    pub fn n_fft(&self) -> usize {
        self.n_fft.unwrap_or(self.n_samples)
    }

    /// Sine at `frequency` with the configured amplitude, offset and phase.
    pub fn sine_at(&self, topo: &AdcTopology, frequency: f64) -> Stimulus {
        Stimulus::Sine {
            frequency,
            amplitude: self.amplitude.unwrap_or(topo.full_scale() / 2.0),
            offset: self.offset.unwrap_or((topo.v_refn + topo.v_refp) / 2.0),
            phase: self.phase,
        }
    }

    /// The stimulus with `frequency` as given (no coherence snapping).
    pub fn signal(&self, topo: &AdcTopology) -> Result<Stimulus, CliError> {
        match self.waveform {
            Waveform::Sine => {
                let f = self
                    .frequency
                    .ok_or_else(|| CliError::Config("stimulus.frequency is required for a sine".into()))?;
                Ok(self.sine_at(topo, f))
            }
            Waveform::Dc => Ok(Stimulus::Dc {
                level: self
                    .level
                    .ok_or_else(|| CliError::Config("stimulus.level is required for dc".into()))?,
            }),
            Waveform::Ramp => Ok(Stimulus::Ramp {
                start: self.start.unwrap_or(topo.v_refn - topo.lsb()),
                stop: self.stop.unwrap_or(topo.v_refp + topo.lsb()),
                duration: self.n_samples as f64 / self.fs,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CharacterizeConfig {
    pub n_harmonics: usize,
    pub histogram_samples: usize,
    /// Histogram sine amplitude relative to full scale.
    pub histogram_overdrive: f64,
    /// Histogram tone; defaults to `stimulus.frequency`.
    pub histogram_frequency: Option<f64>,
}

impl Default for CharacterizeConfig {
    fn default() -> Self {
        Self {
            n_harmonics: capflash::characterize::DEFAULT_HARMONICS,
            histogram_samples: 1 << 18,
            histogram_overdrive: 1.02,
            histogram_frequency: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Signal frequencies, hertz. The first point is the low-frequency reference.
    pub fsignal: Vec<f64>,
    /// Sample rates, hertz.
    pub fsample: Vec<f64>,
    /// Tone used for sample-rate sweeps; defaults to `stimulus.frequency`.
    pub fsample_signal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloConfig {
    pub trials: u64,
    pub limits: YieldLimits,
    /// Also measure each trial with a histogram test.
    pub histogram: bool,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            limits: YieldLimits::default(),
            histogram: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPoint {
    pub fs: Option<f64>,
    pub n_samples: Option<usize>,
    pub n_fft: Option<usize>,
    pub frequency: Option<f64>,
    pub tracking_bandwidth: Option<f64>,
    pub sigma_jitter: Option<f64>,
    pub sigma_noise: Option<f64>,
    pub regen_tau: Option<f64>,
    pub decide_time: Option<f64>,
    pub clock_overhead: Option<f64>,
    #[serde(default)]
    pub fsignal: Vec<f64>,
    #[serde(default)]
    pub fsample: Vec<f64>,
}

fn set<T: Clone>(dst: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *dst = v.clone();
    }
}

fn set_opt<T: Clone>(dst: &mut Option<T>, v: &Option<T>) {
    if v.is_some() {
        *dst = v.clone();
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(CliError::Config(format!(
                "unsupported schema {:?}, expected {CONFIG_SCHEMA:?}",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Folds the named operating point and a seed override into a
    /// self-contained configuration with no operating points left.
    pub fn resolve(mut self, point: Option<&str>, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(name) = point {
            let op = self.operating_points.get(name).cloned().ok_or_else(|| {
                let known: Vec<&str> = self.operating_points.keys().map(String::as_str).collect();
                CliError::Config(format!("unknown operating point {name:?}; known: {known:?}"))
            })?;
            set(&mut self.stimulus.fs, &op.fs);
            set(&mut self.stimulus.n_samples, &op.n_samples);
            set_opt(&mut self.stimulus.n_fft, &op.n_fft);
            set_opt(&mut self.stimulus.frequency, &op.frequency);
            set(&mut self.mismatch.tracking_bandwidth, &op.tracking_bandwidth);
            set(&mut self.mismatch.sigma_jitter, &op.sigma_jitter);
            set(&mut self.mismatch.sigma_noise, &op.sigma_noise);
            set_opt(&mut self.latch.regen_tau, &op.regen_tau);
            if op.decide_time.is_some() {
                self.latch.decide_time = op.decide_time;
                self.latch.clock_overhead = None;
            }
            if op.clock_overhead.is_some() {
                self.latch.clock_overhead = op.clock_overhead;
                self.latch.decide_time = None;
            }
            if !op.fsignal.is_empty() {
                self.sweep.fsignal = op.fsignal.clone();
            }
            if !op.fsample.is_empty() {
                self.sweep.fsample = op.fsample.clone();
            }
        }
        self.operating_points.clear();
        if let Some(s) = seed {
            self.seed = s;
        }
        self.validate()?;
        Ok(self)
    }

    /// Checks every module precondition that can be checked without running.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: capflash::Error| CliError::Config(e.to_string());
        let topo = build_topology(&self.topology).map_err(cfg)?;
        self.mismatch.validate().map_err(cfg)?;
        let s = &self.stimulus;
        if !(s.fs > 0.0 && s.fs.is_finite()) {
            return Err(CliError::Config(format!("stimulus.fs must be > 0, got {}", s.fs)));
        }
        if s.n_samples == 0 || s.n_fft() == 0 || s.decimation == 0 {
            return Err(CliError::Config(
                "stimulus.n_samples, n_fft and decimation must be >= 1".into(),
            ));
        }
        if let Some(f) = s.frequency {
            if !(f > 0.0 && f.is_finite()) {
                return Err(CliError::Config(format!("stimulus.frequency must be > 0, got {f}")));
            }
        }
        s.signal(&topo)?;
        let l = &self.latch;
        if l.decide_time.is_some() && l.clock_overhead.is_some() {
            return Err(CliError::Config(
                "latch.decide_time and latch.clock_overhead are mutually exclusive".into(),
            ));
        }
        if let Some(tau) = l.regen_tau {
            if !(tau > 0.0) {
                return Err(CliError::Config(format!("latch.regen_tau must be > 0, got {tau}")));
            }
        }
        l.model(s.fs).validate().map_err(cfg)?;
        let c = &self.characterize;
        if c.n_harmonics < 2 || c.histogram_samples == 0 || !(c.histogram_overdrive > 0.0) {
            return Err(CliError::Config(
                "characterize needs n_harmonics >= 2, histogram_samples >= 1, histogram_overdrive > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn topology(&self) -> Result<AdcTopology, CliError> {
        build_topology(&self.topology).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Canonical text of the configuration; embedded in every output.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }

    pub fn hash_hex(&self) -> String {
        self.hash().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema = "capflash.config/1"
seed = 7
[stimulus]
waveform = "sine"
fs = 1.2e9
n_samples = 4096
frequency = 21e6
[operating_points.slow]
fs = 600e6
tracking_bandwidth = 600e6
clock_overhead = 3e-10
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap().resolve(None, None).unwrap();
        assert_eq!(c.mismatch, MismatchModel::ideal());
        assert_eq!(c.latch.model(c.stimulus.fs), LatchModel::ideal());
        assert_eq!(c.stimulus.n_fft(), 4096);
        assert!(c.operating_points.is_empty());
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("n_samples = 4096\n", "");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("n_samples"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nsede = 8");
        assert!(matches!(RunConfig::from_toml(&text), Err(CliError::Config(_))));
        let text = MINIMAL.replace("[stimulus]", "[mismatch]\nsigma_offset = 1.0\n[stimulus]");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn operating_point_and_seed_override() {
        let c = RunConfig::from_toml(MINIMAL).unwrap().resolve(Some("slow"), Some(9)).unwrap();
        assert_eq!(c.stimulus.fs, 600e6);
        assert_eq!(c.mismatch.tracking_bandwidth, 600e6);
        assert_eq!(c.latch.clock_overhead, Some(3e-10));
        assert_eq!(c.seed, 9);
        assert!(RunConfig::from_toml(MINIMAL).unwrap().resolve(Some("fast"), None).is_err());
    }

    #[test]
    fn canonical_text_roundtrips_with_same_hash() {
        let c = RunConfig::from_toml(MINIMAL).unwrap().resolve(Some("slow"), None).unwrap();
        let again = RunConfig::from_toml(&c.canonical()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
        let mut other = c.clone();
        other.seed += 1;
        assert_ne!(other.hash(), c.hash());
    }

    #[test]
    fn sine_needs_frequency() {
        let text = MINIMAL.replace("frequency = 21e6\n", "");
        let c = RunConfig::from_toml(&text).unwrap();
        assert!(c.resolve(None, None).unwrap_err().to_string().contains("frequency"));
    }
}
