//! Append-only newline-delimited event log.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LogError;
use crate::campaign::Event;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub seq: u64,
    /// Caller-supplied clock value (milliseconds or logical ticks).
    pub ts: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// In-memory record list with an optional file sink.
///
/// Every append to a file-backed log is written and synced before it returns.
#[derive(Debug, Default)]
pub struct EventLog {
    records: Vec<Record>,
    sink: Option<File>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path` for appending, loading any records already in it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref();
        let records = if path.exists() {
            Self::parse(&std::fs::read_to_string(path)?)?
        } else {
            Vec::new()
        };
        let sink = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLog {
            records,
            sink: Some(sink),
        })
    }

    /// Parses log text, checking that sequence numbers strictly increase.
    pub fn parse(text: &str) -> Result<Vec<Record>, LogError> {
        let mut out: Vec<Record> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(raw).map_err(|e| LogError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            if let Some(prev) = out.last() {
                if rec.seq <= prev.seq {
                    return Err(LogError::OutOfOrder {
                        line: i + 1,
                        previous: prev.seq,
                        found: rec.seq,
                    });
                }
            }
            out.push(rec);
        }
        Ok(out)
    }

    pub fn from_records(records: Vec<Record>) -> Self {
        EventLog {
            records,
            sink: None,
        }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn next_seq(&self) -> u64 {
        self.records.last().map_or(1, |r| r.seq + 1)
    }

    /// Appends a batch of events with one write and one sync.
    pub fn append_batch(&mut self, ts: u64, events: Vec<Event>) -> Result<(), LogError> {
        let mut batch = Vec::with_capacity(events.len());
        let mut text = String::new();
        for (seq, event) in (self.next_seq()..).zip(events) {
            let rec = Record { seq, ts, event };
            text.push_str(&serde_json::to_string(&rec).expect("records serialize"));
            text.push('\n');
            batch.push(rec);
        }
        if let Some(f) = self.sink.as_mut() {
            f.write_all(text.as_bytes())?;
            f.flush()?;
            f.sync_data()?;
        }
        self.records.extend(batch);
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }
}
