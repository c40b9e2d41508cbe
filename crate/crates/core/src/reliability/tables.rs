//! Per-category counts and simulated time/cost reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ReliabilityError;
use crate::engine::{LabelKey, LabelOutcome, OutcomeKind, Protocol};
use crate::hierarchy::{ConceptId, Hierarchy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CountRow {
    /// Leaf id, or one of the `Unrecognised` / `Discharged` buckets.
    pub category: String,
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CountTable {
    pub rows: Vec<CountRow>,
}

impl CountTable {
    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.count).sum()
    }

    pub fn count(&self, category: &str) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.category == category)
            .map(|r| r.count)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["category", "count"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([r.category.as_str(), &r.count.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.category.len() + r.name.len() + 1)
            .max()
            .unwrap_or(8)
            .max(8);
        let mut out = format!("{:<width$}  count\n", "category");
        for r in &self.rows {
            let label = if r.name.is_empty() || r.name == r.category {
                r.category.clone()
            } else {
                format!("{} {}", r.category, r.name)
            };
            let _ = writeln!(out, "{label:<width$}  {:>5}", r.count);
        }
        out
    }
}

/// Tallies final labels into one row per leaf of `leaf_set` plus the
/// `Unrecognised` and `Discharged` buckets.
pub fn category_count_table(
    results: &[(String, LabelOutcome)],
    h: &Hierarchy,
    leaf_set: &[ConceptId],
) -> Result<CountTable, ReliabilityError> {
    for id in leaf_set {
        if !h.is_leaf(id) {
            return Err(ReliabilityError::Integrity(format!(
                "{id} is not a leaf of the hierarchy"
            )));
        }
    }
    let mut leaf_counts: BTreeMap<&ConceptId, usize> = leaf_set.iter().map(|l| (l, 0)).collect();
    let (mut unrecognised, mut discharged) = (0, 0);
    for (image, outcome) in results {
        if let Some(label) = &outcome.label {
            if !h.contains(label) {
                return Err(ReliabilityError::Integrity(format!(
                    "image {image} is labelled {label}, which is not in the hierarchy"
                )));
            }
        }
        match outcome.kind {
            OutcomeKind::Discharged => discharged += 1,
            OutcomeKind::UnrecognisedAt => unrecognised += 1,
            OutcomeKind::Classified => {
                let label = outcome
                    .label
                    .as_ref()
                    .expect("classified outcomes carry a label");
                *leaf_counts.get_mut(label).ok_or_else(|| {
                    ReliabilityError::Integrity(format!(
                        "image {image} is labelled {label}, which is outside the counted leaves"
                    ))
                })? += 1;
            }
        }
    }
    let mut rows: Vec<CountRow> = leaf_set
        .iter()
        .map(|id| CountRow {
            category: id.to_string(),
            name: h.get(id).map(|n| n.name.clone()).unwrap_or_default(),
            count: leaf_counts[id],
        })
        .collect();
    rows.push(CountRow {
        category: LabelKey::UNRECOGNISED.into(),
        name: String::new(),
        count: unrecognised,
    });
    rows.push(CountRow {
        category: LabelKey::DISCHARGED.into(),
        name: String::new(),
        count: discharged,
    });
    Ok(CountTable { rows })
}

/// Seconds per question and payment per image, by protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub seconds_per_question: BTreeMap<Protocol, f64>,
    pub payment_per_image: BTreeMap<Protocol, f64>,
}

impl Default for RateModel {
    /// Assumed rates. Payments reproduce a 1.0 / 1.5 / 1.5 per-50-image
    /// schedule; question times are placeholders, not measurements.
    fn default() -> Self {
        RateModel {
            seconds_per_question: [
                (Protocol::MethodA, 5.0),
                (Protocol::MethodB, 2.4),
                (Protocol::MethodC, 2.6),
            ]
            .into(),
            payment_per_image: [
                (Protocol::MethodA, 0.02),
                (Protocol::MethodB, 0.03),
                (Protocol::MethodC, 0.03),
            ]
            .into(),
        }
    }
}

impl RateModel {
    pub fn validate_for(&self, protocol: Protocol) -> Result<(f64, f64), ReliabilityError> {
        let secs = self.seconds_per_question.get(&protocol).copied();
        let pay = self.payment_per_image.get(&protocol).copied();
        match (secs, pay) {
            (Some(s), Some(p)) if s > 0.0 && p > 0.0 && s.is_finite() && p.is_finite() => {
                Ok((s, p))
            }
            (Some(_), Some(_)) => Err(ReliabilityError::Config(format!(
                "rates for {protocol} must be strictly positive"
            ))),
            _ => Err(ReliabilityError::Config(format!(
                "no rate configured for {protocol}"
            ))),
        }
    }

    pub fn payment_per_task(
        &self,
        protocol: Protocol,
        size: usize,
    ) -> Result<f64, ReliabilityError> {
        Ok(self.validate_for(protocol)?.1 * size as f64)
    }
}

/// One finished annotation session, as needed for cost accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    /// Identifies the task pass (task claimed by one annotator).
    pub pass_id: String,
    pub protocol: Protocol,
    /// Configured task size of the campaign.
    pub task_size: usize,
    pub question_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub protocol: Protocol,
    pub task_size: usize,
    pub alpha: Option<f64>,
    pub time_min: f64,
    pub payment: f64,
    pub passes: usize,
    pub sessions: usize,
    pub mean_questions_per_image: f64,
    pub max_questions: u32,
}

impl CostRow {
    pub fn method_label(&self) -> String {
        format!("{}@{}", self.protocol.letter(), self.task_size)
    }
}

/// Simulated time and payment per task, with agreement when known.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
}

pub fn cost_report(
    sessions: &[SessionRecord],
    rates: &RateModel,
) -> Result<CostReport, ReliabilityError> {
    #[derive(Default)]
    struct Acc<'a> {
        passes: BTreeSet<&'a str>,
        questions: u64,
        sessions: usize,
        max: u32,
    }
    let mut groups: BTreeMap<(Protocol, usize), Acc> = BTreeMap::new();
    for s in sessions {
        let acc = groups.entry((s.protocol, s.task_size)).or_default();
        acc.passes.insert(&s.pass_id);
        acc.questions += u64::from(s.question_count);
        acc.sessions += 1;
        acc.max = acc.max.max(s.question_count);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((protocol, task_size), acc) in groups {
        let (secs, _) = rates.validate_for(protocol)?;
        let mean_task_questions = acc.questions as f64 / acc.passes.len() as f64;
        rows.push(CostRow {
            protocol,
            task_size,
            alpha: None,
            time_min: mean_task_questions * secs / 60.0,
            payment: rates.payment_per_task(protocol, task_size)?,
            passes: acc.passes.len(),
            sessions: acc.sessions,
            mean_questions_per_image: acc.questions as f64 / acc.sessions as f64,
            max_questions: acc.max,
        });
    }
    Ok(CostReport { rows })
}

impl CostReport {
    pub fn set_alpha(&mut self, protocol: Protocol, task_size: usize, alpha: Option<f64>) {
        for r in &mut self.rows {
            if r.protocol == protocol && r.task_size == task_size {
                r.alpha = alpha;
            }
        }
    }

    /// `method,alpha,time_min,payment`; the method column reads `A@50`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "alpha", "time_min", "payment"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.method_label(),
                fmt_opt(r.alpha),
                format!("{:.2}", r.time_min),
                format!("{:.2}", r.payment),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("method   alpha    time_min (simulated)  payment\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<8} {:<8} {:<21.2} {:.2}",
                r.method_label(),
                fmt_opt(r.alpha),
                r.time_min,
                r.payment
            );
        }
        out
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |a| format!("{a:.3}"))
}
