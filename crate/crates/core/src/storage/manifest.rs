//! Image manifests and detector output.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// Box fields as written in a document, before range checks.
#[derive(Debug, Clone, Copy, Deserialize)]
struct RawBox {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
}

impl RawBox {
    fn check(self) -> Result<CropBox, String> {
        if self.x < 0 || self.y < 0 {
            return Err(format!("crop origin ({}, {}) is negative", self.x, self.y));
        }
        if self.w < 1 || self.h < 1 {
            return Err(format!(
                "crop size {}x{} must be at least 1x1",
                self.w, self.h
            ));
        }
        let fit = |v: i64| u32::try_from(v).map_err(|_| format!("crop value {v} is too large"));
        Ok(CropBox {
            x: fit(self.x)?,
            y: fit(self.y)?,
            w: fit(self.w)?,
            h: fit(self.h)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ImageSource {
    Original,
    CroppedFromDetector {
        parent: String,
        detector: String,
        confidence: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub uri: String,
    pub domain_hint: Option<String>,
    pub crop: Option<CropBox>,
    pub source: ImageSource,
    /// Pixel bounds of the source image, when known.
    pub width: Option<u32>,
    pub height: Option<u32>,
    /// Manually screened out of annotation.
    pub excluded: bool,
}

impl ImageRecord {
    pub fn original(image_id: impl Into<String>, uri: impl Into<String>) -> Self {
        ImageRecord {
            image_id: image_id.into(),
            uri: uri.into(),
            domain_hint: None,
            crop: None,
            source: ImageSource::Original,
            width: None,
            height: None,
            excluded: false,
        }
    }

    /// One manifest line for this record.
    pub fn to_manifest_line(&self) -> String {
        let (parent, detector, confidence) = match &self.source {
            ImageSource::Original => (None, None, None),
            ImageSource::CroppedFromDetector {
                parent,
                detector,
                confidence,
            } => (
                Some(parent.clone()),
                Some(detector.clone()),
                Some(*confidence),
            ),
        };
        let line = ManifestLine {
            image_id: self.image_id.clone(),
            uri: self.uri.clone(),
            domain: self.domain_hint.clone(),
            crop: self.crop.map(|c| LineBox {
                x: c.x.into(),
                y: c.y.into(),
                w: c.w.into(),
                h: c.h.into(),
            }),
            exclude: self.excluded,
            width: self.width,
            height: self.height,
            parent,
            detector,
            confidence,
        };
        serde_json::to_string(&line).expect("manifest lines serialize")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    image_id: String,
    uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    crop: Option<LineBox>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    exclude: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    detector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct LineBox {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
}

impl From<LineBox> for RawBox {
    fn from(b: LineBox) -> Self {
        RawBox {
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        }
    }
}

/// Problem found on one line of an input document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn check_confidence(c: f64) -> Result<f64, String> {
    if (0.0..=1.0).contains(&c) {
        Ok(c)
    } else {
        Err(format!("confidence {c} is outside [0, 1]"))
    }
}

fn line_to_record(line: ManifestLine) -> Result<ImageRecord, String> {
    if line.image_id.trim().is_empty() {
        return Err("image_id is empty".into());
    }
    let crop = line.crop.map(|b| RawBox::from(b).check()).transpose()?;
    let source = match (line.parent, line.detector, line.confidence) {
        (None, None, None) => ImageSource::Original,
        (Some(parent), Some(detector), Some(confidence)) => ImageSource::CroppedFromDetector {
            parent,
            detector,
            confidence: check_confidence(confidence)?,
        },
        _ => return Err("parent, detector and confidence must be given together".into()),
    };
    match (&crop, &source) {
        (Some(_), ImageSource::Original) => {
            return Err("a crop needs detector provenance (parent, detector, confidence)".into())
        }
        (None, ImageSource::CroppedFromDetector { .. }) => {
            return Err("detector provenance given without a crop".into())
        }
        _ => {}
    }
    if let (Some(c), Some(w), Some(h)) = (crop, line.width, line.height) {
        if u64::from(c.x) + u64::from(c.w) > u64::from(w)
            || u64::from(c.y) + u64::from(c.h) > u64::from(h)
        {
            return Err(format!("crop exceeds the declared {w}x{h} bounds"));
        }
    }
    Ok(ImageRecord {
        image_id: line.image_id,
        uri: line.uri,
        domain_hint: line.domain,
        crop,
        source,
        width: line.width,
        height: line.height,
        excluded: line.exclude,
    })
}

/// Parses a newline-delimited manifest. Blank lines are skipped; every bad or
/// duplicate line is reported.
pub fn ingest_manifest(document: &str) -> Result<Vec<ImageRecord>, IngestError> {
    let mut issues = Vec::new();
    let mut records = Vec::new();
    let mut first_line: BTreeMap<String, usize> = BTreeMap::new();
    for (i, raw) in document.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<ManifestLine>(raw)
            .map_err(|e| e.to_string())
            .and_then(line_to_record);
        match parsed {
            Err(message) => issues.push(LineIssue {
                line: line_no,
                message,
            }),
            Ok(rec) => {
                if let Some(first) = first_line.get(&rec.image_id) {
                    issues.push(LineIssue {
                        line: line_no,
                        message: format!(
                            "duplicate image_id {} (first on line {first})",
                            rec.image_id
                        ),
                    });
                } else {
                    first_line.insert(rec.image_id.clone(), line_no);
                    records.push(rec);
                }
            }
        }
    }
    if issues.is_empty() {
        Ok(records)
    } else {
        Err(IngestError::Rejected(issues))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct IngestReport {
    pub added: usize,
    /// Ids already present with identical content.
    pub duplicates: Vec<String>,
    /// Ids already present with different content; the stored record wins.
    pub conflicts: Vec<String>,
}

/// Accumulated image records; re-ingesting the same records is a no-op.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageCatalog {
    records: Vec<ImageRecord>,
    index: BTreeMap<String, usize>,
}

impl ImageCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ingest(&mut self, records: impl IntoIterator<Item = ImageRecord>) -> IngestReport {
        let mut report = IngestReport::default();
        for r in records {
            match self.index.get(&r.image_id) {
                Some(&i) if self.records[i] == r => report.duplicates.push(r.image_id),
                Some(_) => report.conflicts.push(r.image_id),
                None => {
                    self.index.insert(r.image_id.clone(), self.records.len());
                    self.records.push(r);
                    report.added += 1;
                }
            }
        }
        report
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.index.get(image_id).map(|&i| &self.records[i])
    }

    /// Records eligible for annotation.
    pub fn annotatable(&self) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(|r| !r.excluded)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedBox {
    pub crop: CropBox,
    pub label: Option<String>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRecord {
    pub image_id: String,
    pub detector: String,
    pub boxes: Vec<DetectedBox>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorLine {
    image_id: String,
    detector: String,
    boxes: Vec<DetectorLineBox>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorLineBox {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
    #[serde(default)]
    label: Option<String>,
    confidence: f64,
}

/// Parses newline-delimited detector output.
pub fn parse_detector_output(document: &str) -> Result<Vec<DetectorRecord>, IngestError> {
    let mut issues = Vec::new();
    let mut out = Vec::new();
    for (i, raw) in document.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<DetectorLine>(raw)
            .map_err(|e| e.to_string())
            .and_then(|l| {
                let boxes = l
                    .boxes
                    .into_iter()
                    .map(|b| {
                        Ok(DetectedBox {
                            crop: RawBox {
                                x: b.x,
                                y: b.y,
                                w: b.w,
                                h: b.h,
                            }
                            .check()?,
                            label: b.label,
                            confidence: check_confidence(b.confidence)?,
                        })
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                Ok(DetectorRecord {
                    image_id: l.image_id,
                    detector: l.detector,
                    boxes,
                })
            });
        match parsed {
            Ok(r) => out.push(r),
            Err(message) => issues.push(LineIssue {
                line: i + 1,
                message,
            }),
        }
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(IngestError::Rejected(issues))
    }
}

/// Derived id of the crop made from box `index` of `parent`.
pub fn crop_id(parent: &str, index: usize) -> String {
    format!("{parent}.crop{index}")
}

/// Turns detector boxes into cropped image records.
///
/// Boxes under `min_confidence` are dropped. The pixels are not touched: each
/// record carries crop metadata and a `#xywh=` media-fragment URI.
pub fn apply_localization(
    original: &ImageRecord,
    detector: &str,
    boxes: &[DetectedBox],
    min_confidence: f64,
) -> Result<Vec<ImageRecord>, IngestError> {
    if original.source != ImageSource::Original {
        return Err(IngestError::Invalid(format!(
            "{} is already a crop; localization applies to originals",
            original.image_id
        )));
    }
    let mut out = Vec::new();
    for (index, b) in boxes.iter().enumerate() {
        let c = b.crop;
        if let (Some(w), Some(h)) = (original.width, original.height) {
            if u64::from(c.x) + u64::from(c.w) > u64::from(w)
                || u64::from(c.y) + u64::from(c.h) > u64::from(h)
            {
                return Err(IngestError::Invalid(format!(
                    "box {index} of {} ({},{} {}x{}) lies outside the {w}x{h} image",
                    original.image_id, c.x, c.y, c.w, c.h
                )));
            }
        }
        if b.confidence < min_confidence {
            continue;
        }
        out.push(ImageRecord {
            image_id: crop_id(&original.image_id, index),
            uri: format!("{}#xywh={},{},{},{}", original.uri, c.x, c.y, c.w, c.h),
            domain_hint: original.domain_hint.clone().or_else(|| b.label.clone()),
            crop: Some(c),
            source: ImageSource::CroppedFromDetector {
                parent: original.image_id.clone(),
                detector: detector.to_string(),
                confidence: b.confidence,
            },
            width: original.width,
            height: original.height,
            excluded: false,
        });
    }
    Ok(out)
}

/// Replaces every image that has detector output by its accepted crops.
/// Images without detector output pass through unchanged.
pub fn localize_all(
    records: &[ImageRecord],
    detections: &[DetectorRecord],
    min_confidence: f64,
) -> Result<Vec<ImageRecord>, IngestError> {
    let by_image: BTreeMap<&str, &DetectorRecord> = detections
        .iter()
        .map(|d| (d.image_id.as_str(), d))
        .collect();
    let mut out = Vec::new();
    for r in records {
        match by_image.get(r.image_id.as_str()) {
            Some(d) => out.extend(apply_localization(
                r,
                &d.detector,
                &d.boxes,
                min_confidence,
            )?),
            None => out.push(r.clone()),
        }
    }
    Ok(out)
}
