//! A drawn device measured end to end.

use capflash::characterize::{coherent_frequency, histogram_linearity, linearity_from_thresholds, spectral_metrics, SpectrumParams};
use capflash::montecarlo::draw_instance;
use capflash::stream::{CodeRecord, CodeStream, StreamMeta};
use capflash::*;

fn model() -> MismatchModel {
    MismatchModel {
        sigma_cap_ratio: 0.004,
        sigma_amp_offset: 0.01,
        ios_residual_factor: 0.15,
        sigma_comp_offset: 0.067,
        ..MismatchModel::ideal()
    }
}

#[test]
fn histogram_agrees_with_static_thresholds() {
    let topo = AdcTopology::nominal();
    let inst = draw_instance(&model(), &topo, 21);
    let mut chain = AnalogChain::new(&topo, &model(), &inst).unwrap();
    let expected = linearity_from_thresholds(&chain.analytic_thresholds(), 64).unwrap();

    let fs = 600e6;
    let n = 1 << 19;
    let tone = coherent_frequency(fs, n, 50e6).unwrap();
    let sine = Stimulus::Sine {
        frequency: tone.frequency,
        amplitude: 0.51,
        offset: 0.75,
        phase: 0.0,
    };
    let conv = Converter::new(&topo, &model(), &inst, &LatchModel::ideal()).unwrap();
    let codes: Vec<u8> = conv.run_record(&sine, fs, n, 5).iter().map(|s| s.binary).collect();
    let measured = histogram_linearity(&codes, 64).unwrap();

    let worst = (1..63)
        .map(|k| (measured.dnl[k] - expected.dnl[k]).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.08, "worst DNL disagreement {worst}");
    assert!((measured.peak_inl - expected.peak_inl).abs() < 0.1);
}

#[test]
fn mismatch_costs_sndr_and_stream_survives_serialization() {
    let topo = AdcTopology::nominal();
    let fs = 1.2e9;
    let n = 4096;
    let tone = coherent_frequency(fs, n, 100e6).unwrap();
    let sine = Stimulus::Sine {
        frequency: tone.frequency,
        amplitude: 0.5,
        offset: 0.75,
        phase: 0.0,
    };
    let sndr = |m: &MismatchModel, seed| {
        let inst = draw_instance(m, &topo, seed);
        let conv = Converter::new(&topo, m, &inst, &LatchModel::ideal()).unwrap();
        let samples = conv.run_record(&sine, fs, n, 1);
        let x: Vec<f64> = samples.iter().map(|s| s.binary as f64).collect();
        let metrics = spectral_metrics(&x, &SpectrumParams { fs, f_in: tone.frequency, n_fft: n, n_harmonics: 7 }).unwrap();
        (metrics.sndr_db, samples)
    };
    let (ideal, _) = sndr(&MismatchModel::ideal(), 1);
    let (real, samples) = sndr(&model(), 9);
    assert!(ideal > 37.5 && real < ideal - 0.5, "{ideal} {real}");

    let stream = CodeStream {
        meta: StreamMeta {
            tool_version: "test".into(),
            config_hash: [7; 32],
            seed: 9,
            fs,
            decimation: 1,
            config: String::new(),
        },
        records: samples.iter().map(CodeRecord::from).collect(),
    };
    let mut bin = Vec::new();
    stream.write_binary(&mut bin).unwrap();
    let back = CodeStream::read_binary(bin.as_slice()).unwrap();
    assert_eq!(back.binary_codes(), samples.iter().map(|s| s.binary).collect::<Vec<_>>());
}
