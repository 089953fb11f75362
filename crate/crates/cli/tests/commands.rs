use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_capflash"));
    c.env_remove("CAPFLASH_OUT_DIR");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ideal() -> String {
    configs().join("ideal.toml").display().to_string()
}

fn calibrated() -> String {
    configs().join("calibrated.toml").display().to_string()
}

fn write_variant(dir: &Path, from: &str, edit: impl Fn(String) -> String) -> String {
    let text = edit(std::fs::read_to_string(from).unwrap());
    let p = dir.join("variant.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn simulate_writes_one_record_per_sample() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--config", &ideal()], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(d.path().join("codes.csv")).unwrap();
    let records = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(records, 4096);
    assert!(text.contains("# seed: 1\n"));
    assert!(text.contains("# config_hash: "));
    assert!(text.contains("# tool_version: "));
}

#[test]
fn simulate_is_byte_identical_on_rerun() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    for (dir, w) in [(&a, "1"), (&b, "3")] {
        let o = run(
            &["simulate", "--config", &calibrated(), "--format", "bin", "--workers", w],
            dir,
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(a.join("codes.bin")).unwrap(), std::fs::read(b.join("codes.bin")).unwrap());
}

#[test]
fn missing_key_is_a_config_error_naming_the_key() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_variant(d.path(), &ideal(), |t| t.replace("n_samples = 4096\n", ""));
    let o = run(&["simulate", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_samples"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_variant(d.path(), &ideal(), |t| t.replace("seed = 1", "seed = 1\nseeed = 2"));
    let o = run(&["simulate", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seeed"));
}

#[test]
fn ideal_spectrum_reports_six_bits() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["characterize", "--mode", "spectrum", "--config", &ideal()], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let sndr: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((sndr - 37.9).abs() < 0.3, "{line}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("spectrum.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], "capflash.report/1");
    assert_eq!(report["seed"], 1);
    assert!(report["config"].as_str().unwrap().contains("[stimulus]"));
    assert!(d.path().join("spectrum.csv").exists());
}

#[test]
fn calibrated_600_msps_spectrum() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        &["characterize", "--mode", "spectrum", "--config", &calibrated(), "--operating-point", "600msps", "--format", "json"],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("spectrum.json")).unwrap()).unwrap();
    let m = &report["result"]["metrics"];
    let sndr = m["sndr_db"].as_f64().unwrap();
    let sfdr = m["sfdr_db"].as_f64().unwrap();
    let thd = m["thd_db"].as_f64().unwrap();
    assert!((35.0..=36.0).contains(&sndr), "{sndr}");
    assert!((sfdr - 52.0).abs() < 2.0, "{sfdr}");
    assert!((thd - 49.0).abs() < 2.0, "{thd}");
    assert!(!d.path().join("spectrum.csv").exists());
}

#[test]
fn linearity_requires_a_sine() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_variant(d.path(), &ideal(), |t| t.replace("waveform = \"sine\"", "waveform = \"ramp\""));
    let o = run(&["characterize", "--mode", "linearity", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("sine"));
}

#[test]
fn too_few_histogram_samples_is_a_precondition_failure() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_variant(d.path(), &ideal(), |t| t.replace("histogram_samples = 1048576", "histogram_samples = 4096"));
    let o = run(&["characterize", "--mode", "linearity", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("histogram_samples >="), "{}", stderr(&o));
}

#[test]
fn non_coherent_tone_suggests_a_frequency() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_variant(d.path(), &ideal(), |t| t.replace("n_fft = 4096", "n_fft = 4096\ncoherent = false"));
    let o = run(&["characterize", "--mode", "spectrum", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("stimulus.frequency = 1.2099609375e8"), "{}", stderr(&o));
}

#[test]
fn characterize_from_recorded_stream_matches_direct_run() {
    let d = tempfile::tempdir().unwrap();
    assert!(run(&["simulate", "--config", &ideal()], d.path()).status.success());
    let direct = run(&["characterize", "--mode", "spectrum", "--config", &ideal()], &d.path().join("direct"));
    let recorded = bin()
        .args(["characterize", "--mode", "spectrum", "--stream"])
        .arg(d.path().join("codes.csv"))
        .arg("--out")
        .arg(d.path().join("recorded"))
        .output()
        .unwrap();
    assert!(recorded.status.success(), "{}", stderr(&recorded));
    assert_eq!(stdout(&direct), stdout(&recorded));
}

#[test]
fn two_point_sweep_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--axis", "fsignal", "--points", "2", "--config", &ideal()], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calibrated_sweeps_reproduce_bandwidth_and_speed_limits() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        &["sweep", "--axis", "fsignal", "--config", &calibrated(), "--operating-point", "1200msps"],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("sweep_fsignal.json")).unwrap()).unwrap();
    let erbw = report["result"]["erbw"].as_f64().unwrap();
    assert!((erbw / 700e6 - 1.0).abs() < 0.1, "{erbw}");

    let o = run(
        &["sweep", "--axis", "fsample", "--config", &calibrated(), "--operating-point", "1200msps"],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("sweep_fsample.json")).unwrap()).unwrap();
    let fs_max = report["result"]["max_fs_enob_target"].as_f64().unwrap();
    assert!((1.3e9..=1.5e9).contains(&fs_max), "{fs_max}");
    let csv = std::fs::read_to_string(d.path().join("sweep_fsample.csv")).unwrap();
    assert!(csv.contains("\nfs,f_in,snr,sndr,sfdr,thd,enob,error\n"));
}

#[test]
fn monte_carlo_reports_yield_and_averaging() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["mc", "--config", &calibrated(), "--trials", "50"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("mc.json")).unwrap()).unwrap();
    let y = report["result"]["ensemble"]["yield_fraction"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&y));
    assert_eq!(report["result"]["averaging"]["outcome"]["status"], "ratio");
    let rows = std::fs::read_to_string(d.path().join("mc.csv")).unwrap();
    assert_eq!(rows.lines().filter(|l| !l.starts_with('#')).count(), 51);
}

fn fom_pj(args: &[&str]) -> f64 {
    let o = bin().arg("fom").args(args).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    stdout(&o).split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn fom_examples_and_homogeneity() {
    let low = fom_pj(&["--power", "0.09", "--enob-dc", "5.64", "--erbw", "600e6"]);
    assert!((low / 1.5 - 1.0).abs() < 0.02, "{low}");
    let high = fom_pj(&["--power", "0.16", "--enob-dc", "5.66", "--erbw", "700e6"]);
    assert!((high - 2.26).abs() < 0.01, "{high}");
    let doubled = fom_pj(&["--power", "0.16", "--enob-dc", "5.66", "--erbw", "1400e6"]);
    assert!((doubled * 2.0 - high).abs() < 1e-3);
}

#[test]
fn fom_rejects_non_positive_input() {
    for args in [["--power", "0", "--enob-dc", "5", "--erbw", "1e9"], ["--power", "1", "--enob-dc", "5", "--erbw", "-1e9"]] {
        let o = bin().arg("fom").args(args).output().unwrap();
        assert_eq!(o.status.code(), Some(2));
    }
}

#[test]
fn fom_ranks_a_comparison_table() {
    let d = tempfile::tempdir().unwrap();
    let table = d.path().join("others.csv");
    std::fs::write(&table, "name,power_w,enob_dc,erbw_hz\nslow,0.5,5.5,300e6\nlean,0.02,5.0,200e6\n").unwrap();
    let o = bin()
        .args(["fom", "--power", "0.16", "--enob-dc", "5.66", "--erbw", "700e6", "--compare"])
        .arg(&table)
        .arg("--out")
        .arg(d.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let ranked = std::fs::read_to_string(d.path().join("fom_ranking.csv")).unwrap();
    let names: Vec<&str> = ranked
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(names, ["lean", "this design", "slow"]);
}

#[test]
fn output_directory_falls_back_to_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["simulate", "--config", &ideal()])
        .env("CAPFLASH_OUT_DIR", d.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.path().join("codes.csv").exists());
}

#[test]
fn embedded_config_reproduces_the_file() {
    let d = tempfile::tempdir().unwrap();
    let first = d.path().join("first");
    let o = run(&["simulate", "--config", &calibrated(), "--operating-point", "1200msps", "--seed", "11"], &first);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(first.join("codes.csv")).unwrap();
    let embedded: String = text
        .lines()
        .filter_map(|l| l.strip_prefix("#>"))
        .map(|l| format!("{}\n", l.strip_prefix(' ').unwrap_or(l)))
        .collect();
    let cfg = d.path().join("embedded.toml");
    std::fs::write(&cfg, embedded).unwrap();
    let second = d.path().join("second");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], &second);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(text, std::fs::read_to_string(second.join("codes.csv")).unwrap());
}
