//! Command-line grammar and dispatch.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use capflash::characterize::{fom, FomInput};
use capflash::stream::{CodeStream, BINARY_MAGIC};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{json_report, opt, out_dir, write_file, Provenance, Table};
use crate::run::{self, Axis};

#[derive(Debug, Parser)]
#[command(name = "capflash", version, about = "Capacitive-interpolation flash ADC simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    /// Compact binary code stream (simulate only).
    Bin,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: config output.dir, $CAPFLASH_OUT_DIR, ./capflash-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format. Reports default to both JSON and CSV, streams to CSV.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Named `[operating_points]` table to apply.
    #[arg(long = "operating-point")]
    pub operating_point: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Linearity,
    Spectrum,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert the configured stimulus and write the code stream.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Histogram linearity or spectral metrics, from a config or a recorded stream.
    Characterize {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Code stream written by `simulate` (CSV or binary).
        #[arg(long)]
        stream: Option<PathBuf>,
    },
    /// Spectral metrics versus signal frequency or sample rate.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Evenly respace the configured sweep to this many points.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Monte Carlo mismatch ensemble and interpolation-averaging experiment.
    Mc {
        #[command(flatten)]
        common: Common,
        /// Trial count [default: montecarlo.trials].
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Energy per conversion step, optionally ranked against published designs.
    Fom {
        /// Power, watts.
        #[arg(long, allow_negative_numbers = true)]
        power: f64,
        /// ENOB at low input frequency, bits.
        #[arg(long = "enob-dc", allow_negative_numbers = true)]
        enob_dc: f64,
        /// Effective resolution bandwidth, hertz.
        #[arg(long, allow_negative_numbers = true)]
        erbw: f64,
        /// CSV with columns name,power_w,enob_dc,erbw_hz.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Name of this design in the ranking.
        #[arg(long, default_value = "this design")]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    RunConfig::load(path)?.resolve(common.operating_point.as_deref(), common.seed)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be >= 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Which report files a command should write.
fn report_formats(f: Option<Format>) -> Result<(bool, bool), CliError> {
    match f {
        None => Ok((true, true)),
        Some(Format::Json) => Ok((true, false)),
        Some(Format::Csv) => Ok((false, true)),
        Some(Format::Bin) => Err(CliError::Config("--format bin applies to simulate only".into())),
    }
}

struct Writer {
    dir: PathBuf,
    json: bool,
    csv: bool,
}

impl Writer {
    fn new(common: &Common, cfg: &RunConfig) -> Result<Self, CliError> {
        let (json, csv) = report_formats(common.format)?;
        Ok(Self {
            dir: out_dir(common.out.as_deref(), Some(cfg)),
            json,
            csv,
        })
    }

    fn emit<T: Serialize>(&self, stem: &str, prov: &Provenance, result: &T, table: Table) -> Result<(), CliError> {
        if self.json {
            let p = write_file(&self.dir, &format!("{stem}.json"), json_report(prov, result).as_bytes())?;
            eprintln!("wrote {}", p.display());
        }
        if self.csv {
            let p = write_file(&self.dir, &format!("{stem}.csv"), table.into_string().as_bytes())?;
            eprintln!("wrote {}", p.display());
        }
        Ok(())
    }
}

pub fn read_stream(path: &Path) -> Result<CodeStream, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let parsed = if bytes.starts_with(BINARY_MAGIC) {
        CodeStream::read_binary(bytes.as_slice())
    } else {
        CodeStream::read_csv(BufReader::new(bytes.as_slice()))
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = load(&common)?;
            let stream = pool(common.workers)?.install(|| run::simulate(&cfg))?;
            let dir = out_dir(common.out.as_deref(), Some(&cfg));
            let (name, bytes) = match common.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut b = Vec::new();
                    stream.write_csv(&mut b)?;
                    ("codes.csv", b)
                }
                Format::Bin => {
                    let mut b = Vec::new();
                    stream.write_binary(&mut b)?;
                    ("codes.bin", b)
                }
                Format::Json => {
                    return Err(CliError::Config("code streams are written as csv or bin".into()));
                }
            };
            let p = write_file(&dir, name, &bytes)?;
            println!("{} records written to {}", stream.records.len(), p.display());
            Ok(())
        }
        Command::Characterize { common, mode, stream } => characterize(&common, mode, stream.as_deref()),
        Command::Sweep { common, axis, points } => {
            let cfg = load(&common)?;
            let w = Writer::new(&common, &cfg)?;
            let result = pool(common.workers)?.install(|| run::sweep(&cfg, axis, points))?;
            let stem = match axis {
                Axis::Fsignal => "sweep_fsignal",
                Axis::Fsample => "sweep_fsample",
            };
            let prov = Provenance::of("sweep", &cfg);
            let mut t = Table::new(
                "capflash.sweep/1",
                &prov,
                &["fs", "f_in", "snr", "sndr", "sfdr", "thd", "enob", "error"],
            );
            for p in &result.points {
                let m = p.metrics.as_ref();
                t.row(&[
                    p.fs.to_string(),
                    p.f_in.to_string(),
                    opt(m.map(|m| m.snr_db)),
                    opt(m.map(|m| m.sndr_db)),
                    opt(m.map(|m| m.sfdr_db)),
                    opt(m.map(|m| m.thd_db)),
                    opt(m.map(|m| m.enob)),
                    p.error.clone().unwrap_or_default().replace(',', ";"),
                ]);
                match m {
                    Some(m) => println!(
                        "fs {:.4e}  f_in {:.4e}  SNDR {:.2} dB  ENOB {:.2}",
                        p.fs, p.f_in, m.sndr_db, m.enob
                    ),
                    None => println!("fs {:.4e}  f_in {:.4e}  failed: {}", p.fs, p.f_in, p.error.as_deref().unwrap_or("")),
                }
            }
            match axis {
                Axis::Fsignal => match (result.erbw, &result.erbw_error) {
                    (Some(f), _) => println!("ERBW {:.1} MHz", f / 1e6),
                    (None, e) => println!("ERBW not found: {}", e.as_deref().unwrap_or("")),
                },
                Axis::Fsample => match result.max_fs_enob_target {
                    Some(fs) => println!("ENOB >= {} up to fs {:.3} GHz", result.enob_target, fs / 1e9),
                    None => println!("ENOB below {} at the first point", result.enob_target),
                },
            }
            w.emit(stem, &prov, &result, t)
        }
        Command::Mc { common, trials } => {
            let cfg = load(&common)?;
            let w = Writer::new(&common, &cfg)?;
            let result = pool(common.workers)?.install(|| run::montecarlo(&cfg, trials))?;
            let prov = Provenance::of("mc", &cfg);
            let mut t = Table::new(
                "capflash.mc/1",
                &prov,
                &[
                    "index",
                    "seed",
                    "peak_dnl",
                    "peak_inl",
                    "threshold_rms",
                    "histogram_peak_dnl",
                    "histogram_peak_inl",
                    "pass",
                ],
            );
            for tr in &result.ensemble.trials {
                t.row(&[
                    tr.index.to_string(),
                    tr.seed.to_string(),
                    tr.peak_dnl.to_string(),
                    tr.peak_inl.to_string(),
                    tr.threshold_rms.to_string(),
                    opt(tr.histogram_peak_dnl),
                    opt(tr.histogram_peak_inl),
                    tr.pass.to_string(),
                ]);
            }
            let e = &result.ensemble;
            println!(
                "{} trials: yield {:.4}, mean peak DNL {:.3} LSB, mean peak INL {:.3} LSB, threshold sigma {:.4} LSB",
                e.n_trials, e.yield_fraction, e.mean_peak_dnl, e.mean_peak_inl, e.threshold_error_sigma
            );
            match result.averaging.outcome {
                capflash::montecarlo::AveragingOutcome::Ratio { ratio, .. } => {
                    println!("interpolated / parent sigma {ratio:.4}")
                }
                capflash::montecarlo::AveragingOutcome::NotApplicable => println!("averaging experiment not applicable"),
            }
            w.emit("mc", &prov, &result, t)
        }
        Command::Fom {
            power,
            enob_dc,
            erbw,
            compare,
            name,
            out,
        } => {
            let this = FomInput { power, enob_dc, erbw };
            this.validate()?;
            println!("FoM {:.4} pJ/conv-step", fom(&this) * 1e12);
            if let Some(path) = compare {
                let mut rows = read_comparison(&path)?;
                rows.push(ComparisonRow {
                    name,
                    power_w: power,
                    enob_dc,
                    erbw_hz: erbw,
                });
                let ranked = rank(rows)?;
                let prov = Provenance::standalone("fom");
                let mut t = Table::new(
                    "capflash.fom/1",
                    &prov,
                    &["rank", "name", "power_w", "enob_dc", "erbw_hz", "fom_pj"],
                );
                for (i, (r, f)) in ranked.iter().enumerate() {
                    println!("{:>3}  {:<24} {:>10.4} pJ", i + 1, r.name, f * 1e12);
                    t.row(&[
                        (i + 1).to_string(),
                        r.name.replace(',', ";"),
                        r.power_w.to_string(),
                        r.enob_dc.to_string(),
                        r.erbw_hz.to_string(),
                        (f * 1e12).to_string(),
                    ]);
                }
                let p = write_file(&out_dir(out.as_deref(), None), "fom_ranking.csv", t.into_string().as_bytes())?;
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn characterize(common: &Common, mode: Mode, stream: Option<&Path>) -> Result<(), CliError> {
    let (cfg, recorded) = match stream {
        Some(path) => {
            let s = read_stream(path)?;
            let cfg = if common.config.is_some() {
                load(common)?
            } else if s.meta.config.is_empty() {
                return Err(CliError::Config(
                    "the stream carries no configuration; pass --config".into(),
                ));
            } else {
                RunConfig::from_toml(&s.meta.config)?.resolve(None, None)?
            };
            (cfg, Some(s))
        }
        None => (load(common)?, None),
    };
    let w = Writer::new(common, &cfg)?;
    let prov = Provenance::of("characterize", &cfg);
    let pool = pool(common.workers)?;
    match mode {
        Mode::Linearity => {
            let result = pool.install(|| match &recorded {
                Some(s) => run::linearity_of_stream(s, &cfg),
                None => run::linearity(&cfg),
            })?;
            let r = &result.report;
            println!(
                "peak DNL {:.3} LSB  peak INL {:.3} LSB  missing codes {}",
                r.peak_dnl,
                r.peak_inl,
                r.missing_codes.len()
            );
            let mut t = Table::new("capflash.linearity/1", &prov, &["code", "count", "dnl", "inl"]);
            for (k, count) in r.histogram.iter().enumerate() {
                let interior = k >= 1 && k + 1 < r.histogram.len();
                t.row(&[
                    k.to_string(),
                    count.to_string(),
                    if interior { r.dnl[k].to_string() } else { String::new() },
                    if interior { r.inl[k].to_string() } else { String::new() },
                ]);
            }
            w.emit("linearity", &prov, &result, t)
        }
        Mode::Spectrum => {
            let result = pool.install(|| match &recorded {
                Some(s) => run::spectrum_of_stream(s, &cfg),
                None => run::spectrum(&cfg),
            })?;
            let m = &result.metrics;
            println!(
                "SNDR {:.2} dB  SNR {:.2} dB  THD {:.2} dB  SFDR {:.2} dB  ENOB {:.3}",
                m.sndr_db, m.snr_db, m.thd_db, m.sfdr_db, m.enob
            );
            let mut t = Table::new("capflash.spectrum/1", &prov, &["bin", "frequency", "power_dbc"]);
            let df = result.fs / m.n_fft as f64;
            for (k, p) in result.spectrum_dbc.iter().enumerate() {
                t.row(&[k.to_string(), (k as f64 * df).to_string(), p.to_string()]);
            }
            w.emit("spectrum", &prov, &result, t)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub power_w: f64,
    pub enob_dc: f64,
    pub erbw_hz: f64,
}

pub fn read_comparison(path: &Path) -> Result<Vec<ComparisonRow>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<Result<Vec<ComparisonRow>, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Rows sorted by ascending energy per conversion step; ties keep input order.
pub fn rank(rows: Vec<ComparisonRow>) -> Result<Vec<(ComparisonRow, f64)>, CliError> {
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let input = FomInput {
            power: r.power_w,
            enob_dc: r.enob_dc,
            erbw: r.erbw_hz,
        };
        input
            .validate()
            .map_err(|e| CliError::Config(format!("row {:?}: {e}", r.name)))?;
        let f = fom(&input);
        out.push((r, f));
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}
