//! Comparator row and digital back end.
//!
//! Latches regenerate for `decide_time` per stage (the comparator itself plus
//! `relatch_stages` re-latches). An input smaller than the metastability
//! window `v_swing * exp(-total_time / regen_tau)` resolves to a fair random
//! bit. The thermometer word then passes a first-order (3-input majority)
//! bubble corrector, a 1-of-N detector and a binary-reflected Gray ROM.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analog::{acquire, AnalogChain, DeviceInstance, LatchInputs, MismatchModel, Stimulus};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_NOISE};
use crate::topology::AdcTopology;
use rayon::prelude::*;

/// Behavioral regenerative latch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatchModel {
    /// Regeneration time constant C/gm, seconds.
    pub regen_tau: f64,
    /// Regeneration time available per latch stage, seconds.
    pub decide_time: f64,
    /// Additional latch stages after the comparator.
    pub relatch_stages: u32,
    /// Output swing a decision must reach, volts.
    pub v_swing: f64,
}

impl LatchModel {
    /// A latch that only fails on an exactly zero input.
    pub fn ideal() -> Self {
        Self {
            regen_tau: 1e-12,
            decide_time: f64::INFINITY,
            relatch_stages: 2,
            v_swing: 0.75,
        }
    }

    /// Latch clocked at `fs`: each stage regenerates for half a clock period
    /// minus a fixed `overhead` (clock distribution and input settling).
    pub fn clocked(regen_tau: f64, fs: f64, overhead: f64, relatch_stages: u32, v_swing: f64) -> Self {
        Self {
            regen_tau,
            decide_time: (0.5 / fs - overhead).max(0.0),
            relatch_stages,
            v_swing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.regen_tau > 0.0 && self.regen_tau.is_finite()) {
            return Err(Error::InvalidModel(format!("regen_tau must be > 0, got {}", self.regen_tau)));
        }
        if !(self.decide_time >= 0.0) {
            return Err(Error::InvalidModel(format!("decide_time must be >= 0, got {}", self.decide_time)));
        }
        if !(self.v_swing > 0.0 && self.v_swing.is_finite()) {
            return Err(Error::InvalidModel(format!("v_swing must be > 0, got {}", self.v_swing)));
        }
        Ok(())
    }

    /// Total regeneration time over the comparator and its re-latches.
    pub fn total_decide_time(&self) -> f64 {
        self.decide_time * (1 + self.relatch_stages) as f64
    }

    /// Smallest input magnitude that still resolves deterministically.
    pub fn metastability_window(&self) -> f64 {
        self.v_swing * (-self.total_decide_time() / self.regen_tau).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatchDecision {
    pub bit: bool,
    pub metastable: bool,
}

/// One comparator decision on `v + comp_offset`.
pub fn latch_decide<R: Rng + ?Sized>(v: f64, comp_offset: f64, latch: &LatchModel, rng: &mut R) -> LatchDecision {
    decide_in_window(v + comp_offset, latch.metastability_window(), rng)
}

#[inline]
fn decide_in_window<R: Rng + ?Sized>(x: f64, window: f64, rng: &mut R) -> LatchDecision {
    if x.abs() > window {
        LatchDecision {
            bit: x > 0.0,
            metastable: false,
        }
    } else {
        LatchDecision {
            bit: rng.random::<bool>(),
            metastable: true,
        }
    }
}

/// Output of the 1-of-N stage: bit `i` (0..=64) marks code `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHot {
    pub bits: u128,
    /// Exactly one bit set.
    pub decodable: bool,
}

impl OneHot {
    pub fn index(&self) -> Option<usize> {
        self.decodable.then(|| self.bits.trailing_zeros() as usize)
    }
}

/// First-order bubble correction followed by 1-of-N conversion for a
/// `width`-comparator row (`width` <= 64, bit 0 = lowest threshold).
///
/// Every comparator output is replaced by the majority of itself and its two
/// neighbours (virtual 1 below the row, virtual 0 above), which removes any
/// isolated wrong bit. `one_hot[i] = c[i-1] & !c[i]` on the corrected word.
pub fn bubble_correct_width(thermometer: u64, width: usize) -> OneHot {
    debug_assert!((1..=64).contains(&width));
    let mask: u64 = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    let t = thermometer & mask;
    // Extended word: bit 0 is the virtual always-on level below the row.
    let ext: u128 = ((t as u128) << 1) | 1;
    let below = (ext << 1) | 1;
    let above = ext >> 1;
    let ext_mask: u128 = (1u128 << (width + 1)) - 1;
    let corrected = ((below & ext) | (ext & above) | (below & above)) & ext_mask | 1;
    // one_hot[i] = e[i] & !e[i+1], i = 0..=width
    let one_hot = corrected & !(corrected >> 1) & ext_mask;
    OneHot {
        bits: one_hot,
        decodable: one_hot.count_ones() == 1,
    }
}

pub fn bubble_correct(thermometer: u64) -> OneHot {
    bubble_correct_width(thermometer, 64)
}

/// Binary-reflected Gray code of `code`.
pub fn gray_encode_code(code: u32) -> u32 {
    code ^ (code >> 1)
}

/// Gray ROM lookup from a 1-of-N word, with the full-scale position folded
/// onto the top code.
pub fn gray_encode(one_hot: &OneHot, n_codes: usize) -> Result<u8> {
    let idx = one_hot.index().ok_or(Error::NonDecodable)?;
    Ok(gray_encode_code(idx.min(n_codes - 1) as u32) as u8)
}

pub fn gray_decode(gray: u32) -> u32 {
    let mut b = gray;
    let mut shift = 1;
    while shift < 32 {
        b ^= b >> shift;
        shift <<= 1;
    }
    b
}

/// One conversion result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSample {
    pub sample_index: u64,
    pub thermometer: u64,
    pub one_hot: u128,
    pub gray: u8,
    pub binary: u8,
    pub metastable_count: u32,
    /// False when bubble correction failed and the popcount fallback was used.
    pub decodable: bool,
}

/// Digital back end for an already-latched thermometer word.
pub fn encode_thermometer(thermometer: u64, width: usize, n_codes: usize) -> (OneHot, u8, u8) {
    let one_hot = bubble_correct_width(thermometer, width);
    let code = match one_hot.index() {
        Some(i) => i,
        None => thermometer.count_ones() as usize,
    };
    let binary = code.min(n_codes - 1) as u32;
    let gray = gray_encode_code(binary);
    (one_hot, gray as u8, binary as u8)
}

/// A complete converter instance: analog chain, comparator row and back end.
#[derive(Debug, Clone)]
pub struct Converter {
    chain: AnalogChain,
    model: MismatchModel,
    latch: LatchModel,
    window: f64,
}

impl Converter {
    pub fn new(topology: &AdcTopology, model: &MismatchModel, instance: &DeviceInstance, latch: &LatchModel) -> Result<Self> {
        latch.validate()?;
        if topology.comparator_count() > 64 {
            return Err(Error::InvalidTopology("comparator row wider than 64 bits".into()));
        }
        let chain = AnalogChain::new(topology, model, instance)?;
        Ok(Self {
            chain,
            model: model.clone(),
            latch: latch.clone(),
            window: latch.metastability_window(),
        })
    }

    /// Mismatch-free converter with an ideal latch.
    pub fn ideal(topology: &AdcTopology) -> Self {
        Self::new(
            topology,
            &MismatchModel::ideal(),
            &DeviceInstance::nominal(topology),
            &LatchModel::ideal(),
        )
        .expect("nominal device matches its topology")
    }

    pub fn topology(&self) -> &AdcTopology {
        self.chain.topology()
    }

    pub fn chain_mut(&mut self) -> &mut AnalogChain {
        &mut self.chain
    }

    pub fn model(&self) -> &MismatchModel {
        &self.model
    }

    pub fn latch(&self) -> &LatchModel {
        &self.latch
    }

    /// Latches a comparator row input vector into a code.
    pub fn decide<R: Rng + ?Sized>(&self, inputs: &LatchInputs, rng: &mut R) -> CodeSample {
        let mut thermometer = 0u64;
        let mut metastable_count = 0;
        for (j, (v, off)) in inputs.values.iter().zip(self.chain.comp_offsets()).enumerate() {
            let d = decide_in_window(v + off, self.window, rng);
            thermometer |= (d.bit as u64) << j;
            metastable_count += d.metastable as u32;
        }
        let topo = self.chain.topology();
        let (one_hot, gray, binary) = encode_thermometer(thermometer, topo.comparator_count(), topo.n_codes());
        CodeSample {
            sample_index: inputs.sample_index,
            thermometer,
            one_hot: one_hot.bits,
            gray,
            binary,
            metastable_count,
            decodable: one_hot.decodable,
        }
    }

    /// Converts a held (already sampled) input voltage.
    pub fn convert_value<R: Rng + ?Sized>(&mut self, v_in: f64, sample_index: u64, rng: &mut R) -> CodeSample {
        let mut inputs = self.chain.latch_inputs(v_in);
        inputs.sample_index = sample_index;
        self.decide(&inputs, rng)
    }

    /// Samples `signal` at `t_nominal` and converts it.
    pub fn convert<R: Rng + ?Sized>(&mut self, signal: &Stimulus, t_nominal: f64, sample_index: u64, rng: &mut R) -> CodeSample {
        let v = acquire(signal, t_nominal, &self.model, rng);
        self.convert_value(v, sample_index, rng)
    }

    /// `n` consecutive conversions at rate `fs`, starting at sample `start`.
    pub fn run<R: Rng + ?Sized>(&mut self, signal: &Stimulus, fs: f64, start: u64, n: usize, rng: &mut R) -> Vec<CodeSample> {
        (0..n as u64)
            .map(|k| {
                let idx = start + k;
                self.convert(signal, idx as f64 / fs, idx, rng)
            })
            .collect()
    }
}

/// Conversions per independent noise stream in [`Converter::run_record`].
pub const RECORD_CHUNK: usize = 4096;

impl Converter {
    /// `n` conversions at rate `fs` starting at sample 0. Chunk `c` of
    /// [`RECORD_CHUNK`] samples draws its noise from
    /// `stream_rng(noise_seed, STREAM_NOISE, c)`, so the record is identical
    /// for any thread count.
    pub fn run_record(&self, signal: &Stimulus, fs: f64, n: usize, noise_seed: u64) -> Vec<CodeSample> {
        let n_chunks = n.div_ceil(RECORD_CHUNK);
        let chunks: Vec<Vec<CodeSample>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut conv = self.clone();
                let mut rng = stream_rng(noise_seed, STREAM_NOISE, c as u64);
                let start = c * RECORD_CHUNK;
                let len = RECORD_CHUNK.min(n - start);
                conv.run(signal, fs, start as u64, len, &mut rng)
            })
            .collect();
        chunks.concat()
    }
}

/// Decimated code stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Decimated {
    pub factor: usize,
    pub samples: Vec<CodeSample>,
}

/// Keeps every `factor`-th sample, starting with the first.
pub fn downsample(stream: &[CodeSample], factor: usize) -> Result<Decimated> {
    if factor == 0 {
        return Err(Error::InvalidArgument("downsample factor must be >= 1".into()));
    }
    Ok(Decimated {
        factor,
        samples: stream.iter().step_by(factor).copied().collect(),
    })
}
