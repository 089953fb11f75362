//! Code-stream file formats.
//!
//! CSV (`capflash.codestream/1`): `#`-prefixed `key: value` metadata lines,
//! the run configuration as `#>`-prefixed lines, then a header row `sample_index,binary,gray,metastable_count` with the
//! Gray word as two lowercase hex digits.
//!
//! Binary, all integers little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `CFCS` |
//! | 2 | format version (1) |
//! | 2 | length `L` of the tool version string |
//! | L | tool version, UTF-8 |
//! | 32 | SHA-256 of the canonical run configuration |
//! | 8 | master seed |
//! | 8 | sample rate, f64 bits |
//! | 4 | decimation factor |
//! | 4 | length `C` of the run configuration text |
//! | C | run configuration, UTF-8 |
//! | 8 | record count `n` |
//! | 12·n | records: u64 sample index, u8 binary, u8 Gray, u16 metastable count |

use std::io::{BufRead, Read, Write};

use crate::backend::{gray_decode, CodeSample};
use crate::error::{Error, Result};

pub const CSV_SCHEMA: &str = "capflash.codestream/1";
pub const BINARY_MAGIC: &[u8; 4] = b"CFCS";
pub const BINARY_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamMeta {
    pub tool_version: String,
    pub config_hash: [u8; 32],
    pub seed: u64,
    pub fs: f64,
    pub decimation: u32,
    /// Newline-terminated configuration text that reproduces the stream; may be empty.
    pub config: String,
}

/// The per-sample fields that survive serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeRecord {
    pub sample_index: u64,
    pub binary: u8,
    pub gray: u8,
    pub metastable_count: u16,
}

impl From<&CodeSample> for CodeRecord {
    fn from(s: &CodeSample) -> Self {
        Self {
            sample_index: s.sample_index,
            binary: s.binary,
            gray: s.gray,
            metastable_count: s.metastable_count.min(u16::MAX as u32) as u16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeStream {
    pub meta: StreamMeta,
    pub records: Vec<CodeRecord>,
}

fn io_err(e: std::io::Error) -> Error {
    Error::MalformedStream(e.to_string())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex32(s: &str) -> Result<[u8; 32]> {
    let s = s.trim();
    if s.len() != 64 {
        return Err(Error::MalformedStream(format!("config hash must be 64 hex digits, got {}", s.len())));
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|e| Error::MalformedStream(e.to_string()))?;
    }
    Ok(out)
}

impl CodeStream {
    pub fn binary_codes(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.binary).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let m = &self.meta;
        let mut out = String::new();
        out.push_str(&format!("# schema: {CSV_SCHEMA}\n"));
        out.push_str(&format!("# tool_version: {}\n", m.tool_version));
        out.push_str(&format!("# config_hash: {}\n", hex(&m.config_hash)));
        out.push_str(&format!("# seed: {}\n", m.seed));
        out.push_str(&format!("# fs: {:e}\n", m.fs));
        out.push_str(&format!("# decimation: {}\n", m.decimation));
        for line in m.config.lines() {
            out.push_str("#> ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("sample_index,binary,gray,metastable_count\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{:02x},{}\n", r.sample_index, r.binary, r.gray, r.metastable_count));
        }
        w.write_all(out.as_bytes()).map_err(io_err)
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut schema = None;
        let mut tool_version = String::new();
        let mut config_hash = [0u8; 32];
        let mut seed = 0;
        let mut fs = f64::NAN;
        let mut decimation = 1;
        let mut config = String::new();
        let mut records = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in r.lines().enumerate() {
            let raw = line.map_err(io_err)?;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::MalformedStream(format!("line {}: {what}", lineno + 1));
            if let Some(text) = raw.strip_prefix("#>") {
                config.push_str(text.strip_prefix(' ').unwrap_or(text));
                config.push('\n');
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta.split_once(':').ok_or_else(|| bad("metadata line without ':'"))?;
                let v = v.trim();
                match k.trim() {
                    "schema" => schema = Some(v.to_string()),
                    "tool_version" => tool_version = v.to_string(),
                    "config_hash" => config_hash = unhex32(v)?,
                    "seed" => seed = v.parse().map_err(|_| bad("bad seed"))?,
                    "fs" => fs = v.parse().map_err(|_| bad("bad fs"))?,
                    "decimation" => decimation = v.parse().map_err(|_| bad("bad decimation"))?,
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if line != "sample_index,binary,gray,metastable_count" {
                    return Err(bad("unexpected column header"));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            let rec = CodeRecord {
                sample_index: f[0].parse().map_err(|_| bad("bad sample_index"))?,
                binary: f[1].parse().map_err(|_| bad("bad binary"))?,
                gray: u8::from_str_radix(f[2], 16).map_err(|_| bad("bad gray"))?,
                metastable_count: f[3].parse().map_err(|_| bad("bad metastable_count"))?,
            };
            if gray_decode(rec.gray as u32) != rec.binary as u32 {
                return Err(bad("gray and binary columns disagree"));
            }
            records.push(rec);
        }
        match schema.as_deref() {
            Some(CSV_SCHEMA) => {}
            Some(other) => return Err(Error::MalformedStream(format!("unsupported schema {other}"))),
            None => return Err(Error::MalformedStream("missing schema line".into())),
        }
        Ok(Self {
            meta: StreamMeta {
                tool_version,
                config_hash,
                seed,
                fs,
                decimation,
                config,
            },
            records,
        })
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let m = &self.meta;
        let mut buf = Vec::with_capacity(64 + 12 * self.records.len());
        buf.extend_from_slice(BINARY_MAGIC);
        buf.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        let tv = m.tool_version.as_bytes();
        buf.extend_from_slice(&(tv.len() as u16).to_le_bytes());
        buf.extend_from_slice(tv);
        buf.extend_from_slice(&m.config_hash);
        buf.extend_from_slice(&m.seed.to_le_bytes());
        buf.extend_from_slice(&m.fs.to_bits().to_le_bytes());
        buf.extend_from_slice(&m.decimation.to_le_bytes());
        buf.extend_from_slice(&(m.config.len() as u32).to_le_bytes());
        buf.extend_from_slice(m.config.as_bytes());
        buf.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            buf.extend_from_slice(&r.sample_index.to_le_bytes());
            buf.push(r.binary);
            buf.push(r.gray);
            buf.extend_from_slice(&r.metastable_count.to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err)
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut data = Vec::new();
        r.read_to_end(&mut data).map_err(io_err)?;
        let mut cur = Cursor { data: &data, pos: 0 };
        if cur.take(4)? != BINARY_MAGIC {
            return Err(Error::MalformedStream("bad magic".into()));
        }
        let version = u16::from_le_bytes(cur.array()?);
        if version != BINARY_VERSION {
            return Err(Error::MalformedStream(format!("unsupported version {version}")));
        }
        let len = u16::from_le_bytes(cur.array()?) as usize;
        let tool_version = String::from_utf8(cur.take(len)?.to_vec()).map_err(|e| Error::MalformedStream(e.to_string()))?;
        let config_hash: [u8; 32] = cur.array()?;
        let seed = u64::from_le_bytes(cur.array()?);
        let fs = f64::from_bits(u64::from_le_bytes(cur.array()?));
        let decimation = u32::from_le_bytes(cur.array()?);
        let clen = u32::from_le_bytes(cur.array()?) as usize;
        let config = String::from_utf8(cur.take(clen)?.to_vec()).map_err(|e| Error::MalformedStream(e.to_string()))?;
        let n = u64::from_le_bytes(cur.array()?) as usize;
        if data.len() - cur.pos != 12 * n {
            return Err(Error::MalformedStream(format!(
                "{} payload bytes for {n} records",
                data.len() - cur.pos
            )));
        }
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            records.push(CodeRecord {
                sample_index: u64::from_le_bytes(cur.array()?),
                binary: cur.take(1)?[0],
                gray: cur.take(1)?[0],
                metastable_count: u16::from_le_bytes(cur.array()?),
            });
        }
        Ok(Self {
            meta: StreamMeta {
                tool_version,
                config_hash,
                seed,
                fs,
                decimation,
                config,
            },
            records,
        })
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.data.len() {
            return Err(Error::MalformedStream("truncated stream".into()));
        }
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(records: Vec<CodeRecord>) -> CodeStream {
        CodeStream {
            meta: StreamMeta {
                tool_version: "0.1.0".into(),
                config_hash: [0xab; 32],
                seed: 42,
                fs: 1.2e9,
                decimation: 64,
                config: "seed = 42\n[stimulus]\nfs = 1.2e9\n".into(),
            },
            records,
        }
    }

    fn record() -> impl Strategy<Value = CodeRecord> {
        (any::<u64>(), 0u8..64, any::<u16>()).prop_map(|(i, b, m)| CodeRecord {
            sample_index: i,
            binary: b,
            gray: b ^ (b >> 1),
            metastable_count: m,
        })
    }

    proptest! {
        #[test]
        fn both_formats_roundtrip(records in proptest::collection::vec(record(), 0..50)) {
            let s = stream(records);
            let mut csv = Vec::new();
            s.write_csv(&mut csv).unwrap();
            prop_assert_eq!(&CodeStream::read_csv(csv.as_slice()).unwrap(), &s);
            let mut bin = Vec::new();
            s.write_binary(&mut bin).unwrap();
            prop_assert_eq!(&CodeStream::read_binary(bin.as_slice()).unwrap(), &s);
        }
    }

    #[test]
    fn rejects_damage() {
        let s = stream(vec![CodeRecord { sample_index: 0, binary: 5, gray: 7, metastable_count: 0 }]);
        let mut bin = Vec::new();
        s.write_binary(&mut bin).unwrap();
        assert!(CodeStream::read_binary(&bin[..bin.len() - 1]).is_err());
        bin[0] = b'X';
        assert!(CodeStream::read_binary(bin.as_slice()).is_err());
        let csv = "# schema: capflash.codestream/1\nsample_index,binary,gray,metastable_count\n0,5,06,0\n";
        assert!(CodeStream::read_csv(csv.as_bytes()).is_err());
        assert!(CodeStream::read_csv("sample_index,binary,gray,metastable_count\n".as_bytes()).is_err());
    }
}
