//! Append-only JSON Lines store for patterns, pairs, verification records
//! and generator transcripts.
//!
//! The first line is a schema header; every later line is one
//! [`StoreRecord`] with a strictly increasing id.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::miner::{ConceptPair, Exchange, Pattern, VerificationRecord};

pub const SCHEMA: &str = "lcmis-store";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum RecordBody {
    Pattern(Pattern),
    Pair(ConceptPair),
    Verification(VerificationRecord),
    Transcript(Exchange),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub id: u64,
    pub timestamp: String,
    pub record: RecordBody,
}

/// A line that failed to parse; the scan skips it and carries on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorruptLine {
    /// 1-based line number in the file.
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scan {
    pub records: Vec<StoreRecord>,
    pub corrupt: Vec<CorruptLine>,
}

impl Scan {
    pub fn patterns(&self) -> impl Iterator<Item = &Pattern> {
        self.records.iter().filter_map(|r| match &r.record {
            RecordBody::Pattern(p) => Some(p),
            _ => None,
        })
    }

    pub fn pairs(&self) -> impl Iterator<Item = &ConceptPair> {
        self.records.iter().filter_map(|r| match &r.record {
            RecordBody::Pair(p) => Some(p),
            _ => None,
        })
    }

    pub fn verifications(&self) -> impl Iterator<Item = &VerificationRecord> {
        self.records.iter().filter_map(|r| match &r.record {
            RecordBody::Verification(v) => Some(v),
            _ => None,
        })
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> String;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
    }
}

/// Always reports the same instant.
pub struct FixedClock(pub String);

impl Clock for FixedClock {
    fn now(&self) -> String {
        self.0.clone()
    }
}

pub struct Store {
    path: PathBuf,
    next_id: u64,
    clock: Box<dyn Clock>,
}

impl Store {
    /// Opens `path`, creating it with a header if missing.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        Self::open_with_clock(path, Box::new(SystemClock))
    }

    pub fn open_with_clock(path: impl Into<PathBuf>, clock: Box<dyn Clock>) -> Result<Self> {
        let path = path.into();
        if !path.exists() {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut f = File::create(&path)?;
            let header = Header {
                schema: SCHEMA.into(),
                version: SCHEMA_VERSION,
            };
            writeln!(f, "{}", serde_json::to_string(&header)?)?;
        }
        let scan = read(&path)?;
        let next_id = scan.records.iter().map(|r| r.id).max().map_or(1, |m| m + 1);
        Ok(Self { path, next_id, clock })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: RecordBody) -> Result<u64> {
        let id = self.next_id;
        let line = serde_json::to_string(&StoreRecord {
            id,
            timestamp: self.clock.now(),
            record,
        })?;
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(f, "{line}")?;
        self.next_id += 1;
        Ok(id)
    }

    pub fn append_all<I: IntoIterator<Item = RecordBody>>(&mut self, records: I) -> Result<Vec<u64>> {
        records.into_iter().map(|r| self.append(r)).collect()
    }

    /// All records in id order, plus any lines that failed to parse.
    pub fn scan(&self) -> Result<Scan> {
        read(&self.path)
    }

    pub fn scan_filter<F: Fn(&StoreRecord) -> bool>(&self, filter: F) -> Result<Scan> {
        let mut scan = self.scan()?;
        scan.records.retain(|r| filter(r));
        Ok(scan)
    }
}

fn read(path: &Path) -> Result<Scan> {
    let store_err = |message: String| Error::Store {
        path: path.to_path_buf(),
        message,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header: Header = match lines.next() {
        Some(line) => serde_json::from_str(&line?).map_err(|e| store_err(format!("bad header: {e}")))?,
        None => return Err(store_err("missing header".into())),
    };
    if header.schema != SCHEMA || header.version != SCHEMA_VERSION {
        return Err(store_err(format!(
            "unsupported schema {} version {}",
            header.schema, header.version
        )));
    }
    let mut scan = Scan::default();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<StoreRecord>(&line) {
            Ok(r) => scan.records.push(r),
            Err(e) => scan.corrupt.push(CorruptLine {
                line: i + 2,
                message: e.to_string(),
            }),
        }
    }
    scan.records.sort_by_key(|r| r.id);
    Ok(scan)
}
