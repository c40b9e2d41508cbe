//! Manifests, detector output, the append-only event log and dataset export.

mod export;
mod log;
mod manifest;

pub use export::{
    describe, export_dataset, export_to_ndjson, parse_export, ExportOptions, ExportRow,
};
pub use log::{EventLog, Record};
pub use manifest::{
    apply_localization, crop_id, ingest_manifest, localize_all, parse_detector_output, CropBox,
    DetectedBox, DetectorRecord, ImageCatalog, ImageRecord, ImageSource, IngestReport, LineIssue,
};

use thiserror::Error;

use crate::campaign::{CampaignError, CampaignState};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{} rejected line(s): {}", .0.len(), .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Rejected(Vec<LineIssue>),
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("event log line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("event log line {line}: sequence {found} follows {previous}")]
    OutOfOrder {
        line: usize,
        previous: u64,
        found: u64,
    },
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("nothing to export: no image has a final label")]
    NothingFinal,
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("export line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Rebuilds campaign state from a log's records.
pub fn replay_state(records: &[Record]) -> Result<CampaignState, CampaignError> {
    CampaignState::replay(records)
}
