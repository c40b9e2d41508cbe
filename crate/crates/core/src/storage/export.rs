//! Labelled dataset export.

use serde::{Deserialize, Serialize};

use super::{CropBox, ExportError, ImageSource};
use crate::assignment::ConsensusKind;
use crate::campaign::{CampaignState, ImageStatus};
use crate::engine::{LevelText, OutcomeKind};
use crate::hierarchy::ConceptId;

/// One exported image with its label path and composed description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportRow {
    pub image_id: String,
    pub uri: String,
    pub status: ConsensusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ConceptId>,
    /// Root-first ids down to the label.
    pub path: Vec<ConceptId>,
    pub names: Vec<String>,
    pub genus: Vec<String>,
    pub differentia: Vec<String>,
    pub description: String,
    /// Votes counted for this image.
    pub annotators: usize,
    /// Votes beyond the target replication.
    pub escalations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropBox>,
    pub source: ImageSource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExportOptions {
    pub include_unresolved: bool,
}

fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// Composes a description from the label path, deepest level first.
///
/// Each level reads "{name}: a {parent} with {differentia}."; a root names its
/// genus in place of a parent.
pub fn describe(path: &[LevelText]) -> String {
    let mut parts = Vec::with_capacity(path.len());
    for k in (0..path.len()).rev() {
        let node = &path[k];
        let parent = if k > 0 {
            &path[k - 1].name
        } else {
            &node.genus
        };
        parts.push(format!(
            "{}: {} {} with {}.",
            node.name,
            article(parent),
            parent,
            node.differentia
        ));
    }
    parts.join(" ")
}

/// Exports every image with a final label, in manifest order.
pub fn export_dataset(
    state: &CampaignState,
    options: ExportOptions,
) -> Result<Vec<ExportRow>, ExportError> {
    let h = state.hierarchy();
    let mut rows = Vec::new();
    let mut finals = 0;
    for image_id in state.annotatable_ids() {
        let record = state
            .image(image_id)
            .ok_or_else(|| ExportError::Integrity(format!("image {image_id} has no record")))?;
        let annotators = state.votes(image_id).map_or(0, |v| v.len());
        let escalations = state.escalations(image_id);
        let row = match state.status(image_id) {
            Some(ImageStatus::Final { label }) => {
                finals += 1;
                let path_ids: Vec<ConceptId> = label.path.iter().map(|l| l.id.clone()).collect();
                if let Some(id) = &label.label {
                    let expected: Vec<ConceptId> = h
                        .path_to(id)
                        .map_err(|_| {
                            ExportError::Integrity(format!(
                                "label {id} of image {image_id} is not in the hierarchy"
                            ))
                        })?
                        .into_iter()
                        .map(|n| n.id.clone())
                        .collect();
                    if expected != path_ids {
                        return Err(ExportError::Integrity(format!(
                            "path of image {image_id} does not lead to {id}"
                        )));
                    }
                }
                let description = match label.kind {
                    OutcomeKind::Discharged => {
                        "Discharged: none of the top-level categories apply.".to_string()
                    }
                    _ => describe(&label.path),
                };
                ExportRow {
                    image_id: image_id.to_string(),
                    uri: record.uri.clone(),
                    status: ConsensusKind::Final,
                    outcome: Some(label.kind),
                    label: label.label.clone(),
                    path: path_ids,
                    names: label.path.iter().map(|l| l.name.clone()).collect(),
                    genus: label.path.iter().map(|l| l.genus.clone()).collect(),
                    differentia: label.path.iter().map(|l| l.differentia.clone()).collect(),
                    description,
                    annotators,
                    escalations,
                    crop: record.crop,
                    source: record.source.clone(),
                }
            }
            Some(ImageStatus::Unresolved) if options.include_unresolved => ExportRow {
                image_id: image_id.to_string(),
                uri: record.uri.clone(),
                status: ConsensusKind::Unresolved,
                outcome: None,
                label: None,
                path: Vec::new(),
                names: Vec::new(),
                genus: Vec::new(),
                differentia: Vec::new(),
                description: "Unresolved: annotators did not agree.".to_string(),
                annotators,
                escalations,
                crop: record.crop,
                source: record.source.clone(),
            },
            _ => continue,
        };
        rows.push(row);
    }
    if finals == 0 {
        return Err(ExportError::NothingFinal);
    }
    Ok(rows)
}

pub fn export_to_ndjson(rows: &[ExportRow]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("rows serialize") + "\n")
        .collect()
}

pub fn parse_export(text: &str) -> Result<Vec<ExportRow>, ExportError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ExportError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn goldfinch_description() {
        let h = fixtures::goldfinch();
        let path: Vec<LevelText> = h
            .path_to(&"1-1-1".parse().unwrap())
            .unwrap()
            .into_iter()
            .map(LevelText::from)
            .collect();
        let d = describe(&path);
        assert!(
            d.starts_with("Goldfinch: a Finch with Crimson face and yellow-and-black wings."),
            "{d}"
        );
        assert_eq!(d.matches(": ").count(), 3);
        assert!(d.contains("Finch: a Bird with"));
        assert_eq!(article("Instrument"), "an");
        assert_eq!(describe(&[]), "");
    }
}
