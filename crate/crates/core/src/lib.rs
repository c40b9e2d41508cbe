//! Hierarchy-guided image annotation.
//!
//! The crate covers a full crowdsourced labelling campaign:
//!
//! - [`hierarchy`]: the visual-property category forest and its document format.
//! - [`engine`]: resumable question sessions that walk the hierarchy.
//! - [`assignment`]: task building, consensus and escalation.
//! - [`reliability`]: Krippendorff's alpha and report tables.
//! - [`storage`]: manifests, detector output, the event log and dataset export.
//! - [`campaign`]: the event-sourced campaign state machine.
//! - [`service`]: transport-independent request handling with idempotent answers.
//! - [`simulation`]: synthetic corpora and annotator models for desk-scale runs.

pub mod assignment;
pub mod campaign;
pub mod engine;
pub mod fixtures;
pub mod hierarchy;
pub mod reliability;
pub mod service;
pub mod simulation;
pub mod storage;

pub use engine::{Answer, LabelKey, LabelOutcome, OutcomeKind, Protocol, Question, Step};
pub use hierarchy::{ConceptId, Hierarchy, HierarchyError, VisualCategory};
