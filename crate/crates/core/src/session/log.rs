use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SessionConfig;
use crate::action::DisentangleAction;
use crate::direction::DirectionRecord;
use crate::error::{Error, Result};

pub const LOG_FORMAT_VERSION: u32 = 1;

/// One accepted action and the direction it left behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub action: DisentangleAction,
    /// Current direction after the action, once one can be composed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<DirectionRecord>,
    #[serde(default)]
    pub tested: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// First line of a persisted log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    pub session_id: String,
    pub model_hash: String,
    pub config: SessionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    #[serde(flatten)]
    pub header: LogHeader,
    pub entries: Vec<LogEntry>,
}

impl SessionLog {
    /// Entries that carry a direction, in log order.
    pub fn snapshots(&self) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter().filter(|e| e.direction.is_some())
    }

    /// Header line followed by one line per entry.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header)?;
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines.next().ok_or_else(|| Error::load("header", "log is empty"))?;
        let header: LogHeader = serde_json::from_str(first).map_err(|e| Error::load("header", e.to_string()))?;
        if header.format_version != LOG_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: header.format_version,
                supported: LOG_FORMAT_VERSION,
            });
        }
        let entries = lines
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::load(format!("entry {i}"), e.to_string())))
            .collect::<Result<Vec<LogEntry>>>()?;
        Ok(Self { header, entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut text = String::new();
        for line in BufReader::new(File::open(path)?).lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::from_jsonl(&text)
    }
}

/// Appends log lines to a file as actions are accepted.
#[derive(Debug)]
pub struct LogWriter {
    out: BufWriter<File>,
}

impl LogWriter {
    /// Creates the file and writes the header.
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self> {
        let file = OpenOptions::new().create_new(true).write(true).open(path)?;
        let mut w = Self { out: BufWriter::new(file) };
        w.line(header)?;
        Ok(w)
    }

    fn line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn append(&mut self, entry: &LogEntry) -> Result<()> {
        self.line(entry)
    }

    pub fn sync(&mut self) -> Result<()> {
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        Ok(())
    }
}
