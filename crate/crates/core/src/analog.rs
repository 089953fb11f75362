//! Two-phase analog signal path.
//!
//! Phase 1 samples the (band-limited, jittered) input on the front-end
//! capacitors while every later stage samples its own offset. Phase 2 applies
//! the divided references to the bottom plates and amplifies the differences
//! through the interpolating gain stages up to the comparator row.
//!
//! Settling is ideal. Amplifier outputs hard-clip at the topology's
//! `output_clip`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{divider_reference, AdcTopology};

/// Jitter draws beyond this many sigmas are redrawn.
pub const JITTER_TRUNCATION: f64 = 5.0;

/// Mismatch, offset-sampling and dynamic non-idealities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MismatchModel {
    /// Relative sigma of the reference-divider capacitor ratio.
    pub sigma_cap_ratio: f64,
    /// Amplifier input offset sigma before offset sampling, volts.
    pub sigma_amp_offset: f64,
    /// Fraction of the amplifier offset that survives input-offset sampling.
    pub ios_residual_factor: f64,
    /// Comparator latch offset sigma, volts.
    pub sigma_comp_offset: f64,
    /// Sampling clock jitter, seconds rms.
    pub sigma_jitter: f64,
    /// Input-referred thermal noise per conversion, volts rms.
    pub sigma_noise: f64,
    /// First-order tracking bandwidth of the front end, hertz.
    pub tracking_bandwidth: f64,
}

impl Default for MismatchModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl MismatchModel {
    /// No mismatch, no jitter, infinite bandwidth.
    pub fn ideal() -> Self {
        Self {
            sigma_cap_ratio: 0.0,
            sigma_amp_offset: 0.0,
            ios_residual_factor: 0.0,
            sigma_comp_offset: 0.0,
            sigma_jitter: 0.0,
            sigma_noise: 0.0,
            tracking_bandwidth: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            ("sigma_cap_ratio", self.sigma_cap_ratio),
            ("sigma_amp_offset", self.sigma_amp_offset),
            ("sigma_comp_offset", self.sigma_comp_offset),
            ("sigma_jitter", self.sigma_jitter),
            ("sigma_noise", self.sigma_noise),
        ];
        for (name, s) in sigmas {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} must be >= 0, got {s}")));
            }
        }
        if !(0.0..=1.0).contains(&self.ios_residual_factor) {
            return Err(Error::InvalidModel(format!(
                "ios_residual_factor must be in [0, 1], got {}",
                self.ios_residual_factor
            )));
        }
        if !(self.tracking_bandwidth > 0.0) {
            return Err(Error::InvalidModel(format!(
                "tracking_bandwidth must be > 0, got {}",
                self.tracking_bandwidth
            )));
        }
        Ok(())
    }
}

/// One physical converter: every mismatch draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceInstance {
    pub seed: u64,
    /// Raw amplifier input offsets per gain stage, volts.
    pub amp_offsets: Vec<Vec<f64>>,
    /// Latch offsets of the comparator row, volts.
    pub comp_offsets: Vec<f64>,
    /// Relative error of C1 for every front-end reference tap.
    pub cap_ratio_errors: Vec<f64>,
}

impl DeviceInstance {
    /// The mismatch-free device.
    pub fn nominal(topology: &AdcTopology) -> Self {
        Self {
            seed: 0,
            amp_offsets: topology.stage_amp_counts.iter().map(|&n| vec![0.0; n]).collect(),
            comp_offsets: vec![0.0; topology.comparator_count()],
            cap_ratio_errors: vec![0.0; topology.front_end_amps],
        }
    }

    pub fn check(&self, topology: &AdcTopology) -> Result<()> {
        let counts: Vec<usize> = self.amp_offsets.iter().map(Vec::len).collect();
        if counts != topology.stage_amp_counts {
            return Err(Error::DimensionMismatch(format!(
                "amplifier offsets {counts:?} vs stage counts {:?}",
                topology.stage_amp_counts
            )));
        }
        if self.comp_offsets.len() != topology.comparator_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} comparator offsets for {} comparators",
                self.comp_offsets.len(),
                topology.comparator_count()
            )));
        }
        if self.cap_ratio_errors.len() != topology.front_end_amps {
            return Err(Error::DimensionMismatch(format!(
                "{} tap ratio errors for {} front-end amplifiers",
                self.cap_ratio_errors.len(),
                topology.front_end_amps
            )));
        }
        Ok(())
    }
}

/// Continuous-time test stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "waveform", rename_all = "lowercase", deny_unknown_fields)]
pub enum Stimulus {
    Dc {
        level: f64,
    },
    Sine {
        frequency: f64,
        amplitude: f64,
        offset: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Linear ramp from `start` at t=0 to `stop` at t=`duration`, held afterwards.
    Ramp {
        start: f64,
        stop: f64,
        duration: f64,
    },
}

impl Stimulus {
    /// Ideal input value.
    pub fn value(&self, t: f64) -> f64 {
        self.tracked_value(t, f64::INFINITY)
    }

    /// Input as seen through a first-order tracking pole at `bandwidth`,
    /// steady-state response evaluated analytically.
    pub fn tracked_value(&self, t: f64, bandwidth: f64) -> f64 {
        match *self {
            Stimulus::Dc { level } => level,
            Stimulus::Sine {
                frequency,
                amplitude,
                offset,
                phase,
            } => {
                let x = frequency / bandwidth;
                let gain = 1.0 / (1.0 + x * x).sqrt();
                let lag = x.atan();
                offset + amplitude * gain * (std::f64::consts::TAU * frequency * t + phase - lag).sin()
            }
            Stimulus::Ramp { start, stop, duration } => {
                let delay = 1.0 / (std::f64::consts::TAU * bandwidth);
                let u = ((t - delay) / duration).clamp(0.0, 1.0);
                start + (stop - start) * u
            }
        }
    }

    pub fn is_sine(&self) -> bool {
        matches!(self, Stimulus::Sine { .. })
    }
}

/// Draws an aperture-jitter offset, Gaussian truncated at ±5 sigma.
pub fn jitter_draw<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= JITTER_TRUNCATION {
            return z * sigma;
        }
    }
}

/// Samples the input at the jittered instant through the tracking pole and
/// adds the input-referred thermal noise of this conversion.
pub fn acquire<R: Rng + ?Sized>(signal: &Stimulus, t_nominal: f64, model: &MismatchModel, rng: &mut R) -> f64 {
    let t = t_nominal + jitter_draw(model.sigma_jitter, rng);
    let v = signal.tracked_value(t, model.tracking_bandwidth);
    if model.sigma_noise > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        v + z * model.sigma_noise
    } else {
        v
    }
}

/// Charge stored on the front-end capacitors at the end of phase 1,
/// expressed as the per-unit difference seen in phase 2.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEndState {
    pub v_in: f64,
    pub stored: Vec<f64>,
}

/// Differential voltages at the comparator row.
#[derive(Debug, Clone, PartialEq)]
pub struct LatchInputs {
    pub values: Vec<f64>,
    pub sample_index: u64,
    pub true_input: f64,
}

/// Interpolates `parents` by `factor`: parent copies at multiples of `factor`
/// and linear (capacitive) averages in between.
pub fn interpolate(parents: &[f64], factor: u32, out: &mut Vec<f64>) {
    out.clear();
    let f = factor as usize;
    for w in parents.windows(2) {
        out.push(w[0]);
        for m in 1..f {
            let a = m as f64 / f as f64;
            out.push((1.0 - a) * w[0] + a * w[1]);
        }
    }
    if let Some(&last) = parents.last() {
        out.push(last);
    }
}

/// The analog chain of one device instance.
///
/// Holds the sampled front-end state between the two clock phases;
/// [`AnalogChain::propagate`] consumes it.
#[derive(Debug, Clone)]
pub struct AnalogChain {
    topology: AdcTopology,
    /// Effective front-end references including divider mismatch.
    taps: Vec<f64>,
    /// Offsets remaining after offset sampling, per stage.
    residual_offsets: Vec<Vec<f64>>,
    comp_offsets: Vec<f64>,
    held: Option<FrontEndState>,
    buf_a: Vec<f64>,
    buf_b: Vec<f64>,
}

impl AnalogChain {
    pub fn new(topology: &AdcTopology, model: &MismatchModel, instance: &DeviceInstance) -> Result<Self> {
        model.validate()?;
        instance.check(topology)?;
        let taps = perturbed_taps(topology, &instance.cap_ratio_errors);
        let residual_offsets = instance
            .amp_offsets
            .iter()
            .map(|stage| stage.iter().map(|o| o * model.ios_residual_factor).collect())
            .collect();
        let width = *topology.stage_amp_counts.iter().max().unwrap();
        Ok(Self {
            topology: topology.clone(),
            taps,
            residual_offsets,
            comp_offsets: instance.comp_offsets.clone(),
            held: None,
            buf_a: Vec::with_capacity(width),
            buf_b: Vec::with_capacity(width),
        })
    }

    pub fn topology(&self) -> &AdcTopology {
        &self.topology
    }

    /// Front-end reference voltages after capacitor-ratio mismatch.
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn comp_offsets(&self) -> &[f64] {
        &self.comp_offsets
    }

    /// Phase 1: store `v_in - v_ref_i` plus the residual front-end offset.
    pub fn front_end_sample(&mut self, v_in: f64) -> &FrontEndState {
        let stored = self
            .taps
            .iter()
            .zip(&self.residual_offsets[0])
            .map(|(tap, off)| v_in - tap + off)
            .collect();
        self.held.insert(FrontEndState { v_in, stored })
    }

    /// Phase 2: amplify and interpolate the held state to the comparator row.
    pub fn propagate(&mut self) -> Result<LatchInputs> {
        let state = self.held.take().ok_or(Error::PhaseOrderViolation)?;
        let values = self.run_stages(&state.stored, true);
        Ok(LatchInputs {
            values,
            sample_index: 0,
            true_input: state.v_in,
        })
    }

    /// Both phases for a held input value.
    pub fn latch_inputs(&mut self, v_in: f64) -> LatchInputs {
        self.front_end_sample(v_in);
        self.propagate().expect("state was just sampled")
    }

    fn run_stages(&mut self, stored: &[f64], clip: bool) -> Vec<f64> {
        let limit = if clip { self.topology.output_clip } else { f64::INFINITY };
        let mut cur = std::mem::take(&mut self.buf_a);
        let mut next = std::mem::take(&mut self.buf_b);
        cur.clear();
        let g0 = self.topology.stage_gains[0];
        cur.extend(stored.iter().map(|d| (g0 * d).clamp(-limit, limit)));
        for s in 1..self.topology.n_stages() {
            interpolate(&cur, self.topology.stage_interp[s], &mut next);
            let g = self.topology.stage_gains[s];
            for (v, off) in next.iter_mut().zip(&self.residual_offsets[s]) {
                *v = (g * (*v + off)).clamp(-limit, limit);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        let values = cur[1..].to_vec();
        self.buf_a = cur;
        self.buf_b = next;
        values
    }

    /// Input-referred zero crossings of every comparator from the small-signal
    /// (unclipped, linear) chain, comparator offsets included.
    pub fn analytic_thresholds(&mut self) -> Vec<f64> {
        let stored: Vec<f64> = self
            .taps
            .iter()
            .zip(&self.residual_offsets[0])
            .map(|(tap, off)| -tap + off)
            .collect();
        let intercepts = self.run_stages(&stored, false);
        let gain = self.topology.chain_gain();
        intercepts
            .iter()
            .zip(&self.comp_offsets)
            .map(|(b, c)| -(b + c) / gain)
            .collect()
    }

    /// Input-referred zero-crossing errors of the nodes feeding gain stage
    /// `stage` (after its interpolation network, before its own offset),
    /// split into parent copies and interpolated nodes.
    pub fn interpolation_node_errors(&self, stage: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if stage == 0 || stage >= self.topology.n_stages() {
            return Err(Error::InvalidArgument(format!(
                "stage {stage} has no interpolation network (1..{})",
                self.topology.n_stages()
            )));
        }
        // Nodes are linear in v_in with unit slope times the gain so far, so
        // the crossing error is minus the input-referred intercept offset.
        let mut cur: Vec<f64> = self
            .taps
            .iter()
            .zip(&self.residual_offsets[0])
            .map(|(tap, off)| -tap + off)
            .collect();
        let mut ideal: Vec<f64> = self.topology.reference_taps().iter().map(|t| -t.v_ref).collect();
        let mut next = Vec::new();
        let mut next_ideal = Vec::new();
        for s in 1..=stage {
            interpolate(&cur, self.topology.stage_interp[s], &mut next);
            interpolate(&ideal, self.topology.stage_interp[s], &mut next_ideal);
            if s < stage {
                let referred = self.gain_before(s);
                for (v, off) in next.iter_mut().zip(&self.residual_offsets[s]) {
                    *v += off / referred;
                }
            }
            std::mem::swap(&mut cur, &mut next);
            std::mem::swap(&mut ideal, &mut next_ideal);
        }
        let f = self.topology.stage_interp[stage] as usize;
        let mut parents = Vec::new();
        let mut interpolated = Vec::new();
        for (j, (b, b0)) in cur.iter().zip(&ideal).enumerate() {
            // node = v + b (input-referred); crossing at -b, ideal at -b0
            let err = -(b - b0);
            if j % f == 0 {
                parents.push(err);
            } else {
                interpolated.push(err);
            }
        }
        Ok((parents, interpolated))
    }

    /// Zero crossing of comparator `j` (0-based) through the full clipped
    /// chain, comparator offset included, found by bisection on `[lo, hi]`.
    pub fn swept_threshold(&mut self, j: usize, lo: f64, hi: f64) -> f64 {
        let offset = self.comp_offsets[j];
        let mut lo = lo;
        let mut hi = hi;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.latch_inputs(mid).values[j] + offset > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn gain_before(&self, stage: usize) -> f64 {
        self.topology.stage_gains[..stage].iter().product()
    }
}

fn perturbed_taps(topology: &AdcTopology, ratio_errors: &[f64]) -> Vec<f64> {
    topology
        .reference_taps()
        .iter()
        .zip(ratio_errors)
        .map(|(tap, e)| divider_reference(topology.v_refn, topology.v_refp, tap.c1 * (1.0 + e), tap.c2))
        .collect()
}
