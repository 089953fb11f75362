//! Static converter architecture.
//!
//! The front end is a row of `interp_factors[0] + 1` sampling amplifiers whose
//! references come from capacitive division between the two reference
//! voltages. Every following factor `f > 1` adds a gain stage whose inputs are
//! a capacitive interpolation (factor `f`) of the previous stage's outputs.
//! Factors equal to 1 are direct connections and add no amplifiers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal per-amplifier sampling capacitance: 400 fF split over 9 amplifiers.
pub const NOMINAL_SAMPLING_CAP: f64 = 400e-15 / 9.0;

/// Intrinsic gain or a per-stage list of intrinsic gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Uniform(f64),
    PerStage(Vec<f64>),
}

/// Raw architecture parameters, as read from a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub resolution_bits: u32,
    pub interp_factors: Vec<u32>,
    /// Open-loop amplifier gain before the capacitive-divider loss.
    pub intrinsic_gain: GainSpec,
    /// Sampling (interpolation) capacitance per amplifier, farads.
    pub sampling_cap_per_amp: f64,
    /// Amplifier input capacitance forming the divider with the sampling cap, farads.
    pub amp_input_cap: f64,
    /// Input wiring parasitic, farads.
    pub wiring_parasitic: f64,
    pub v_refn: f64,
    pub v_refp: f64,
    /// Differential output swing limit of every amplifier, volts.
    pub output_clip: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            resolution_bits: 6,
            interp_factors: vec![8, 2, 2, 2, 1],
            intrinsic_gain: GainSpec::Uniform(3.125),
            sampling_cap_per_amp: NOMINAL_SAMPLING_CAP,
            amp_input_cap: NOMINAL_SAMPLING_CAP / 4.0,
            wiring_parasitic: 0.0,
            v_refn: 0.25,
            v_refp: 1.25,
            output_clip: 0.75,
        }
    }
}

/// Validated architecture with derived per-stage quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdcTopology {
    pub resolution_bits: u32,
    pub interp_factors: Vec<u32>,
    pub front_end_amps: usize,
    pub stage_amp_counts: Vec<usize>,
    /// Interpolation factor at the input of each gain stage (1 for the front end).
    pub stage_interp: Vec<u32>,
    /// Effective gain of each stage, divider loss included.
    pub stage_gains: Vec<f64>,
    pub sampling_cap_per_amp: f64,
    pub amp_input_cap: f64,
    pub wiring_parasitic: f64,
    pub v_refn: f64,
    pub v_refp: f64,
    pub output_clip: f64,
}

/// One capacitive-divider reference tap of the front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceTap {
    pub index: usize,
    pub c1: f64,
    pub c2: f64,
    pub v_ref: f64,
}

/// Reference produced by a capacitive divider between `v_refn` and `v_refp`.
pub fn divider_reference(v_refn: f64, v_refp: f64, c1: f64, c2: f64) -> f64 {
    v_refn + c1 / (c1 + c2) * (v_refp - v_refn)
}

/// Amplifier gain after the loss of the sampling-cap / input-cap divider.
pub fn effective_stage_gain(intrinsic_gain: f64, c_sample: f64, c_amp_in: f64) -> f64 {
    intrinsic_gain * c_sample / (c_sample + c_amp_in)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTopology(format!("{name} must be positive and finite, got {v}")))
    }
}

pub fn build_topology(config: &TopologyConfig) -> Result<AdcTopology> {
    let bits = config.resolution_bits;
    if bits == 0 || bits > 12 {
        return Err(Error::InvalidTopology(format!("resolution_bits must be in 1..=12, got {bits}")));
    }
    let factors = &config.interp_factors;
    if factors.is_empty() {
        return Err(Error::InvalidTopology("interp_factors is empty".into()));
    }
    if let Some(f) = factors.iter().find(|&&f| f == 0) {
        return Err(Error::InvalidTopology(format!("interpolation factor {f} < 1")));
    }
    let product: u64 = factors.iter().map(|&f| f as u64).product();
    if product != 1u64 << bits {
        return Err(Error::InvalidTopology(format!(
            "interpolation factor product {product} != 2^{bits} = {}",
            1u64 << bits
        )));
    }
    positive("sampling_cap_per_amp", config.sampling_cap_per_amp)?;
    positive("output_clip", config.output_clip)?;
    if !(config.amp_input_cap >= 0.0 && config.amp_input_cap.is_finite()) {
        return Err(Error::InvalidTopology("amp_input_cap must be >= 0".into()));
    }
    if !(config.wiring_parasitic >= 0.0 && config.wiring_parasitic.is_finite()) {
        return Err(Error::InvalidTopology("wiring_parasitic must be >= 0".into()));
    }
    if !(config.v_refp > config.v_refn) || !config.v_refn.is_finite() || !config.v_refp.is_finite() {
        return Err(Error::InvalidTopology(format!(
            "v_refp ({}) must exceed v_refn ({})",
            config.v_refp, config.v_refn
        )));
    }

    let front_end_amps = factors[0] as usize + 1;
    let mut stage_amp_counts = vec![front_end_amps];
    let mut stage_interp = vec![1];
    for &f in &factors[1..] {
        if f > 1 {
            let prev = *stage_amp_counts.last().unwrap();
            stage_amp_counts.push(f as usize * (prev - 1) + 1);
            stage_interp.push(f);
        }
    }

    let n_stages = stage_amp_counts.len();
    let intrinsic = match &config.intrinsic_gain {
        GainSpec::Uniform(g) => vec![*g; n_stages],
        GainSpec::PerStage(g) if g.len() == n_stages => g.clone(),
        GainSpec::PerStage(g) => {
            return Err(Error::InvalidTopology(format!(
                "{} intrinsic gains given for {n_stages} gain stages",
                g.len()
            )))
        }
    };
    let mut stage_gains = Vec::with_capacity(n_stages);
    for g in intrinsic {
        positive("intrinsic_gain", g)?;
        stage_gains.push(effective_stage_gain(g, config.sampling_cap_per_amp, config.amp_input_cap));
    }

    Ok(AdcTopology {
        resolution_bits: bits,
        interp_factors: factors.clone(),
        front_end_amps,
        stage_amp_counts,
        stage_interp,
        stage_gains,
        sampling_cap_per_amp: config.sampling_cap_per_amp,
        amp_input_cap: config.amp_input_cap,
        wiring_parasitic: config.wiring_parasitic,
        v_refn: config.v_refn,
        v_refp: config.v_refp,
        output_clip: config.output_clip,
    })
}

impl AdcTopology {
    pub fn nominal() -> Self {
        build_topology(&TopologyConfig::default()).expect("nominal topology is valid")
    }

    pub fn full_scale(&self) -> f64 {
        self.v_refp - self.v_refn
    }

    pub fn lsb(&self) -> f64 {
        self.full_scale() / self.n_codes() as f64
    }

    pub fn n_codes(&self) -> usize {
        1 << self.resolution_bits
    }

    /// Number of latching comparators (one per decision level).
    pub fn comparator_count(&self) -> usize {
        self.n_codes()
    }

    pub fn n_stages(&self) -> usize {
        self.stage_amp_counts.len()
    }

    /// Product of the effective stage gains.
    pub fn chain_gain(&self) -> f64 {
        self.stage_gains.iter().product()
    }

    /// Front-end reference taps obtained by splitting each sampling capacitor
    /// between the two references.
    pub fn reference_taps(&self) -> Vec<ReferenceTap> {
        let n = self.interp_factors[0] as usize;
        let cs = self.sampling_cap_per_amp;
        (0..=n)
            .map(|i| {
                let c1 = cs * i as f64 / n as f64;
                let c2 = cs * (n - i) as f64 / n as f64;
                ReferenceTap {
                    index: i,
                    c1,
                    c2,
                    v_ref: divider_reference(self.v_refn, self.v_refp, c1, c2),
                }
            })
            .collect()
    }

    pub fn input_capacitance(&self) -> f64 {
        self.front_end_amps as f64 * self.sampling_cap_per_amp + self.wiring_parasitic
    }

    /// All `2^N + 1` ideal zero-crossing levels, `v_refn` to `v_refp`.
    /// The comparator row sits on levels `1..=2^N`.
    pub fn threshold_levels(&self) -> Vec<f64> {
        let n = self.n_codes();
        let fs = self.full_scale();
        (0..=n)
            .map(|k| self.v_refn + fs * k as f64 / n as f64)
            .collect()
    }

    /// Ideal thresholds of the comparator row.
    pub fn comparator_thresholds(&self) -> Vec<f64> {
        self.threshold_levels()[1..].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b.abs().max(f64::MIN_POSITIVE)).abs()
    }

    #[test]
    fn nominal_stage_counts() {
        let t = AdcTopology::nominal();
        assert_eq!(t.front_end_amps, 9);
        assert_eq!(t.stage_amp_counts, vec![9, 17, 33, 65]);
        assert_eq!(t.stage_gains.len(), 4);
        for g in &t.stage_gains {
            assert!((g - 2.5).abs() < 1e-12);
        }
        assert!(rel(t.chain_gain(), 39.0625) < 1e-12);
    }

    #[test]
    fn trailing_unit_factor_is_optional() {
        let cfg = TopologyConfig {
            interp_factors: vec![8, 2, 2, 2],
            ..Default::default()
        };
        let t = build_topology(&cfg).unwrap();
        assert_eq!(t.stage_amp_counts, vec![9, 17, 33, 65]);
    }

    #[test]
    fn full_flash_degenerate() {
        let cfg = TopologyConfig {
            interp_factors: vec![64],
            ..Default::default()
        };
        let t = build_topology(&cfg).unwrap();
        assert_eq!(t.front_end_amps, 65);
        assert_eq!(t.stage_amp_counts, vec![65]);
        assert_eq!(t.reference_taps().len(), 65);
    }

    #[test]
    fn rejects_bad_product_and_values() {
        let bad = TopologyConfig {
            interp_factors: vec![8, 2, 2],
            ..Default::default()
        };
        assert!(matches!(build_topology(&bad), Err(Error::InvalidTopology(_))));
        let zero = TopologyConfig {
            interp_factors: vec![8, 0, 2, 2, 2],
            ..Default::default()
        };
        assert!(build_topology(&zero).is_err());
        let cap = TopologyConfig {
            sampling_cap_per_amp: 0.0,
            ..Default::default()
        };
        assert!(build_topology(&cap).is_err());
        let gain = TopologyConfig {
            intrinsic_gain: GainSpec::Uniform(-1.0),
            ..Default::default()
        };
        assert!(build_topology(&gain).is_err());
        let gains = TopologyConfig {
            intrinsic_gain: GainSpec::PerStage(vec![3.0; 3]),
            ..Default::default()
        };
        assert!(build_topology(&gains).is_err());
    }

    #[test]
    fn reference_tap_examples() {
        let t = AdcTopology::nominal();
        let taps = t.reference_taps();
        assert_eq!(taps.len(), 9);
        assert_eq!(taps[0].v_ref, t.v_refn);
        assert!(rel(taps[8].v_ref, t.v_refp) < 1e-15);
        assert!(rel(taps[3].v_ref, 0.625) < 1e-12);
        assert!(rel(taps[4].v_ref, 0.75) < 1e-12);
        for tap in &taps {
            assert!(rel(tap.c1 / (tap.c1 + tap.c2), tap.index as f64 / 8.0) < 1e-12 || tap.index == 0);
        }
        assert!(taps.windows(2).all(|w| w[1].v_ref > w[0].v_ref));
        // symmetric divider
        assert!(rel(divider_reference(0.25, 1.25, 1e-15, 1e-15), 0.75) < 1e-15);
    }

    #[test]
    fn taps_coincide_with_threshold_levels() {
        let t = AdcTopology::nominal();
        let levels = t.threshold_levels();
        for tap in t.reference_taps() {
            let k = tap.index * 8;
            assert!(rel(tap.v_ref, levels[k]) <= 1e-12, "tap {}", tap.index);
        }
    }

    #[test]
    fn input_capacitance_examples() {
        let t = AdcTopology::nominal();
        assert!(rel(t.input_capacitance(), 400e-15) < 1e-12);
        let cfg = TopologyConfig {
            sampling_cap_per_amp: 40e-15,
            amp_input_cap: 10e-15,
            wiring_parasitic: 40e-15,
            ..Default::default()
        };
        assert!(rel(build_topology(&cfg).unwrap().input_capacitance(), 400e-15) < 1e-12);
        let single = TopologyConfig {
            resolution_bits: 1,
            interp_factors: vec![1, 2],
            sampling_cap_per_amp: 1e-12,
            ..Default::default()
        };
        // a lone amplifier is not a legal array; two of 1 pF must give 2 pF
        let t1 = build_topology(&single).unwrap();
        assert!(rel(t1.input_capacitance(), 2e-12) < 1e-12);
    }

    #[test]
    fn effective_gain_examples() {
        assert_eq!(effective_stage_gain(3.0, 1e-15, 0.0), 3.0);
        assert!(rel(effective_stage_gain(3.125, 4e-15, 1e-15), 2.5) < 1e-12);
        assert!(rel(effective_stage_gain(3.0, 1e-15, 1e-15), 1.5) < 1e-12);
    }

    #[test]
    fn threshold_level_examples() {
        let t = AdcTopology::nominal();
        let levels = t.threshold_levels();
        assert_eq!(levels.len(), 65);
        assert_eq!(levels[0], t.v_refn);
        assert_eq!(levels[64], t.v_refp);
        assert!(rel(levels[32], 0.75) < 1e-12);
        for w in levels.windows(2) {
            assert!(rel(w[1] - w[0], 0.015625) < 1e-12);
        }
        assert_eq!(t.comparator_thresholds().len(), 64);
    }

    #[test]
    fn build_is_deterministic() {
        let c = TopologyConfig::default();
        assert_eq!(build_topology(&c).unwrap(), build_topology(&c).unwrap());
    }
}
