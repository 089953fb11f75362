//! Report and table files.
//!
//! JSON reports (`capflash.report/1`) wrap a result in an envelope with the
//! tool version, config hash, seed and the full canonical configuration.
//! CSV tables start with the same facts as `# key: value` lines and the
//! configuration as `#>` lines. Nothing time-dependent is written.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::run::TOOL_VERSION;

pub const REPORT_SCHEMA: &str = "capflash.report/1";
pub const OUT_DIR_ENV: &str = "CAPFLASH_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "capflash-out";

/// `--out`, then the config's `output.dir`, then `$CAPFLASH_OUT_DIR`, then `./capflash-out`.
pub fn out_dir(flag: Option<&Path>, cfg: Option<&RunConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = cfg.and_then(|c| c.output.dir.clone()) {
        return p;
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from(DEFAULT_OUT_DIR),
    }
}

/// Who produced a file.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: String,
}

impl Provenance {
    pub fn of(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.into(),
            config_hash: cfg.hash_hex(),
            seed: cfg.seed,
            config: cfg.canonical(),
        }
    }

    /// For commands that take no configuration.
    pub fn standalone(command: &str) -> Self {
        Self {
            command: command.into(),
            config_hash: String::new(),
            seed: 0,
            config: String::new(),
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'static str,
    tool_version: &'static str,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    result: &'a T,
    config: &'a str,
}

pub fn json_report<T: Serialize>(prov: &Provenance, result: &T) -> String {
    let env = Envelope {
        schema: REPORT_SCHEMA,
        tool_version: TOOL_VERSION,
        command: &prov.command,
        config_hash: &prov.config_hash,
        seed: prov.seed,
        result,
        config: &prov.config,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("report serializes");
    s.push('\n');
    s
}

/// A CSV table with a metadata preamble.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(schema: &str, prov: &Provenance, columns: &[&str]) -> Self {
        let mut text = String::new();
        let _ = writeln!(text, "# schema: {schema}");
        let _ = writeln!(text, "# tool_version: {TOOL_VERSION}");
        let _ = writeln!(text, "# command: {}", prov.command);
        let _ = writeln!(text, "# config_hash: {}", prov.config_hash);
        let _ = writeln!(text, "# seed: {}", prov.seed);
        for line in prov.config.lines() {
            let _ = writeln!(text, "#> {line}");
        }
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Formats an optional number; empty when absent.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}
