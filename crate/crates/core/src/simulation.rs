//! Synthetic corpora and annotator models for desk-scale campaigns.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assignment::{DEFAULT_ESCALATION_CAP, DEFAULT_REPLICATION};
use crate::campaign::{Campaign, CampaignError, CampaignSettings, ImageStatus, TaskKind};
use crate::engine::{
    question_upper_bound, Answer, LabelOutcome, OutcomeKind, Protocol, Question, QuestionKind, Step,
};
use crate::hierarchy::{ConceptId, Hierarchy, HierarchyDocument, HierarchyError};
use crate::reliability::{
    category_count_table, cost_report, fmt_opt, CountTable, RateModel, ReliabilityError,
};
use crate::storage::{EventLog, ImageRecord};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// True category of a synthetic image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Leaf(ConceptId),
    /// Matches none of the root categories.
    OutOfScope,
}

impl Truth {
    /// Whether a label outcome recovers this truth.
    pub fn matches(&self, outcome: &LabelOutcome) -> bool {
        match self {
            Truth::Leaf(id) => {
                outcome.kind == OutcomeKind::Classified && outcome.label.as_ref() == Some(id)
            }
            Truth::OutOfScope => outcome.kind == OutcomeKind::Discharged,
        }
    }
}

pub type GroundTruth = BTreeMap<String, Truth>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    /// Image ids in manifest order.
    pub image_ids: Vec<String>,
    pub truth: GroundTruth,
}

impl Corpus {
    pub fn records(&self) -> Vec<ImageRecord> {
        self.image_ids
            .iter()
            .map(|id| ImageRecord::original(id.clone(), format!("synthetic://{id}")))
            .collect()
    }

    /// Digest of ids and truths; equal corpora have equal fingerprints.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for id in &self.image_ids {
            h.update(id.as_bytes());
            h.update(b"=");
            match &self.truth[id] {
                Truth::Leaf(l) => h.update(l.to_string().as_bytes()),
                Truth::OutOfScope => h.update(b"out"),
            }
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Out-of-scope images to add so they make up `fraction` of the corpus,
/// rounded to the nearest image.
pub fn out_of_scope_count(in_scope: usize, fraction: f64) -> usize {
    (fraction * in_scope as f64 / (1.0 - fraction)).round() as usize
}

pub fn generate_synthetic_corpus(
    h: &Hierarchy,
    n_per_leaf: usize,
    out_of_scope_fraction: f64,
    seed: u64,
) -> Result<Corpus, SimError> {
    if n_per_leaf < 1 {
        return Err(SimError::Config("n_per_leaf must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&out_of_scope_fraction) {
        return Err(SimError::Config(format!(
            "out_of_scope_fraction {out_of_scope_fraction} is outside [0, 1)"
        )));
    }
    let leaves = h.leaves();
    if leaves.is_empty() {
        return Err(SimError::Config("hierarchy has no leaves".into()));
    }
    let mut truths: Vec<Truth> = leaves
        .iter()
        .flat_map(|l| std::iter::repeat_n(Truth::Leaf(l.id.clone()), n_per_leaf))
        .collect();
    let extra = out_of_scope_count(truths.len(), out_of_scope_fraction);
    truths.extend(std::iter::repeat_n(Truth::OutOfScope, extra));
    truths.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let width = truths.len().to_string().len().max(5);
    let mut image_ids = Vec::with_capacity(truths.len());
    let mut truth = GroundTruth::new();
    for (i, t) in truths.into_iter().enumerate() {
        let id = format!("img-{:0width$}", i + 1);
        truth.insert(id.clone(), t);
        image_ids.push(id);
    }
    Ok(Corpus { image_ids, truth })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confusion {
    /// Wrong flat choices are uniform over the other options.
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorModel {
    /// Probability that a yes/no answer is truthful.
    pub answer_accuracy: f64,
    /// Deepest level the annotator can recognise; deeper questions get No.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_depth: Option<usize>,
    /// Probability of picking the true category in a flat choice.
    pub flat_accuracy: f64,
    pub seed: u64,
    #[serde(default)]
    pub confusion: Confusion,
}

impl AnnotatorModel {
    pub fn oracle(seed: u64) -> Self {
        Self::noisy(1.0, seed)
    }

    pub fn noisy(accuracy: f64, seed: u64) -> Self {
        AnnotatorModel {
            answer_accuracy: accuracy,
            knowledge_depth: None,
            flat_accuracy: accuracy,
            seed,
            confusion: Confusion::Uniform,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("answer_accuracy", self.answer_accuracy),
            ("flat_accuracy", self.flat_accuracy),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::Config(format!("{name} {v} is outside [0, 1]")));
            }
        }
        if self.knowledge_depth == Some(0) {
            return Err(SimError::Config(
                "knowledge_depth must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Answer stream for one annotator on one image, independent of scheduling.
pub fn answer_rng(
    run_seed: u64,
    model: &AnnotatorModel,
    annotator_id: &str,
    image_id: &str,
) -> ChaCha8Rng {
    let digest = Sha256::digest(format!(
        "{run_seed}:{}:{annotator_id}:{image_id}",
        model.seed
    ));
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Draws a model annotator's answer to `q` about `image_id`.
pub fn simulated_answer(
    model: &AnnotatorModel,
    truth: &GroundTruth,
    image_id: &str,
    q: &Question,
    rng: &mut impl Rng,
) -> Answer {
    let t = truth.get(image_id).unwrap_or(&Truth::OutOfScope);
    match q.kind {
        QuestionKind::DifferentiaYesNo => {
            let subject = q.subject.as_ref().expect("yes/no questions name a subject");
            if model.knowledge_depth.is_some_and(|d| subject.depth() > d) {
                return Answer::No;
            }
            let truthful = matches!(t, Truth::Leaf(leaf) if subject.is_ancestor_or_self(leaf));
            let honest = model.answer_accuracy >= 1.0 || rng.gen::<f64>() < model.answer_accuracy;
            if truthful == honest {
                Answer::Yes
            } else {
                Answer::No
            }
        }
        QuestionKind::FlatChoice => {
            let right = match t {
                Truth::Leaf(leaf) if q.choices.iter().any(|c| &c.id == leaf) => {
                    Answer::Choice(leaf.clone())
                }
                _ => Answer::NoneOfThese,
            };
            if model.flat_accuracy >= 1.0 || rng.gen::<f64>() < model.flat_accuracy {
                return right;
            }
            let mut options: Vec<Answer> = q
                .choices
                .iter()
                .map(|c| Answer::Choice(c.id.clone()))
                .collect();
            if q.allows_none {
                options.push(Answer::NoneOfThese);
            }
            options.retain(|a| *a != right);
            options.choose(rng).cloned().unwrap_or(right)
        }
    }
}

/// One simulated campaign, summarised.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub protocol: Protocol,
    pub task_size: usize,
    pub images: usize,
    pub tasks: usize,
    pub escalation_tasks: usize,
    pub annotators: usize,
    pub alpha: Option<f64>,
    pub alpha_collapsed: Option<f64>,
    pub counts: CountTable,
    pub mean_questions: f64,
    pub max_questions: u32,
    pub question_bound: u32,
    pub time_min: f64,
    pub payment: f64,
    /// Share of images whose final label recovers the truth.
    pub accuracy: f64,
    /// Share of individual votes that recover the truth.
    pub single_accuracy: f64,
    pub escalated_images: usize,
    pub unresolved: usize,
    pub corpus_fingerprint: String,
}

impl SimRow {
    pub fn method_label(&self) -> String {
        format!("{}@{}", self.protocol.letter(), self.task_size)
    }
}

#[derive(Debug)]
pub struct SimRun {
    pub row: SimRow,
    pub campaign: Campaign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(default = "default_replication")]
    pub replication: usize,
    #[serde(default = "default_escalation_cap")]
    pub escalation_cap: usize,
    #[serde(default)]
    pub rates: RateModel,
}

fn default_replication() -> usize {
    DEFAULT_REPLICATION
}

fn default_escalation_cap() -> usize {
    DEFAULT_ESCALATION_CAP
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            replication: DEFAULT_REPLICATION,
            escalation_cap: DEFAULT_ESCALATION_CAP,
            rates: RateModel::default(),
        }
    }
}

/// Drives a campaign to completion with model annotators.
///
/// Annotators take turns claiming tasks. When nobody registered can claim
/// but work remains, a new annotator joins, cycling through `models`.
pub fn run_campaign(
    h: &Hierarchy,
    corpus: &Corpus,
    models: &[AnnotatorModel],
    protocol: Protocol,
    task_size: usize,
    seed: u64,
    options: &RunOptions,
) -> Result<SimRun, SimError> {
    if models.len() < options.replication {
        return Err(SimError::Config(format!(
            "{} annotator models given, replication needs {}",
            models.len(),
            options.replication
        )));
    }
    for m in models {
        m.validate()?;
    }
    options.rates.validate_for(protocol)?;
    let settings = CampaignSettings {
        protocol,
        task_size,
        replication: options.replication,
        escalation_cap: options.escalation_cap,
        claim_timeout_ms: None,
        token_secret: Some(format!("sim-{seed}")),
    };
    let mut tick = 0u64;
    let mut next_tick = || {
        tick += 1;
        tick
    };
    let mut campaign = Campaign::create(
        format!("sim-{}-{task_size}", protocol.letter()),
        settings,
        h,
        corpus.records(),
        EventLog::in_memory(),
        next_tick(),
    )?;
    let mut annotators: Vec<(String, usize)> = Vec::new();
    let join = |campaign: &mut Campaign, annotators: &mut Vec<(String, usize)>, ts: u64| {
        let id = format!("ann-{:03}", annotators.len() + 1);
        let model = annotators.len() % models.len();
        campaign.register_annotator(&id, &format!("model-{model}"), ts)?;
        annotators.push((id, model));
        Ok::<_, CampaignError>(())
    };
    for _ in 0..models.len() {
        join(&mut campaign, &mut annotators, next_tick())?;
    }

    loop {
        let mut worked = false;
        for (ann, model) in annotators.clone() {
            worked |= work_one_task(
                &mut campaign,
                &ann,
                &models[model],
                corpus,
                seed,
                &mut next_tick,
            )?;
        }
        if campaign.state().is_complete() {
            break;
        }
        if !worked {
            join(&mut campaign, &mut annotators, next_tick())?;
            let (ann, model) = annotators.last().cloned().expect("just joined");
            if !work_one_task(
                &mut campaign,
                &ann,
                &models[model],
                corpus,
                seed,
                &mut next_tick,
            )? {
                return Err(SimError::Campaign(CampaignError::Integrity(
                    "work remains but no annotator can claim it".into(),
                )));
            }
        }
    }
    let row = summarise(h, corpus, &campaign, annotators.len(), &options.rates)?;
    Ok(SimRun { row, campaign })
}

fn work_one_task(
    campaign: &mut Campaign,
    annotator: &str,
    model: &AnnotatorModel,
    corpus: &Corpus,
    seed: u64,
    tick: &mut impl FnMut() -> u64,
) -> Result<bool, SimError> {
    let Some(task) = campaign.claim_task(annotator, tick())? else {
        return Ok(false);
    };
    for image in &task.image_ids {
        let mut rng = answer_rng(seed, model, annotator, image);
        let view = campaign.open_session(annotator, &task.task_id, image, tick())?;
        let mut pending = view.question;
        while let Some(q) = pending {
            let a = simulated_answer(model, &corpus.truth, image, &q, &mut rng);
            pending = match campaign.answer(&view.session_id, q.sequence_no, a, tick())? {
                Step::Next { question } => Some(question),
                Step::Finished { .. } => None,
            };
        }
    }
    Ok(true)
}

fn summarise(
    h: &Hierarchy,
    corpus: &Corpus,
    campaign: &Campaign,
    annotators: usize,
    rates: &RateModel,
) -> Result<SimRow, SimError> {
    let state = campaign.state();
    let finals = state.final_results();
    let leaves: Vec<ConceptId> = h.leaves().into_iter().map(|l| l.id.clone()).collect();
    let counts = category_count_table(&finals, h, &leaves)?;
    let sessions = state.session_records();
    let cost = cost_report(&sessions, rates)?;
    let cost_row = cost.rows.first().ok_or_else(|| {
        SimError::Config("campaign finished without any completed session".into())
    })?;

    let correct = finals
        .iter()
        .filter(|(id, o)| corpus.truth[id].matches(o))
        .count();
    let (mut votes, mut right_votes) = (0usize, 0usize);
    for id in &corpus.image_ids {
        if let Some(v) = state.votes(id) {
            for vote in &v.votes {
                votes += 1;
                right_votes += usize::from(corpus.truth[id].matches(&vote.outcome));
            }
        }
    }
    let escalated_images = corpus
        .image_ids
        .iter()
        .filter(|id| state.escalations(id) > 0)
        .count();
    let unresolved = corpus
        .image_ids
        .iter()
        .filter(|id| state.status(id) == Some(&ImageStatus::Unresolved))
        .count();
    Ok(SimRow {
        protocol: state.protocol(),
        task_size: state.settings().task_size,
        images: corpus.image_ids.len(),
        tasks: state
            .tasks()
            .iter()
            .filter(|t| t.kind == TaskKind::Regular)
            .count(),
        escalation_tasks: state
            .tasks()
            .iter()
            .filter(|t| t.kind == TaskKind::Escalation)
            .count(),
        annotators,
        alpha: state.alpha(false).ok(),
        alpha_collapsed: state.alpha(true).ok(),
        counts,
        mean_questions: cost_row.mean_questions_per_image,
        max_questions: cost_row.max_questions,
        question_bound: question_upper_bound(h),
        time_min: cost_row.time_min,
        payment: cost_row.payment,
        accuracy: correct as f64 / corpus.image_ids.len().max(1) as f64,
        single_accuracy: right_votes as f64 / votes.max(1) as f64,
        escalated_images,
        unresolved,
        corpus_fingerprint: corpus.fingerprint(),
    })
}

/// Difference between two rows of the same task size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub minuend: Protocol,
    pub subtrahend: Protocol,
    pub task_size: usize,
    pub alpha: Option<f64>,
    pub time_min: f64,
    pub payment: f64,
    pub accuracy: f64,
}

impl DeltaRow {
    pub fn label(&self) -> String {
        format!(
            "{}-{}@{}",
            self.minuend.letter(),
            self.subtrahend.letter(),
            self.task_size
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub rows: Vec<SimRow>,
    pub deltas: Vec<DeltaRow>,
}

const DELTA_PAIRS: [(Protocol, Protocol); 3] = [
    (Protocol::MethodB, Protocol::MethodA),
    (Protocol::MethodC, Protocol::MethodB),
    (Protocol::MethodC, Protocol::MethodA),
];

impl SimReport {
    /// Builds the report, rejecting rows simulated on different corpora.
    pub fn from_rows(rows: Vec<SimRow>) -> Result<Self, SimError> {
        if let Some(first) = rows.first() {
            if let Some(r) = rows
                .iter()
                .find(|r| r.corpus_fingerprint != first.corpus_fingerprint)
            {
                return Err(SimError::Config(format!(
                    "row {} was simulated on a different corpus than row {}",
                    r.method_label(),
                    first.method_label()
                )));
            }
        }
        let mut sizes: Vec<usize> = rows.iter().map(|r| r.task_size).collect();
        sizes.sort_unstable();
        sizes.dedup();
        let mut deltas = Vec::new();
        for size in sizes {
            let find = |p: Protocol| rows.iter().find(|r| r.protocol == p && r.task_size == size);
            for (m, s) in DELTA_PAIRS {
                if let (Some(a), Some(b)) = (find(m), find(s)) {
                    deltas.push(DeltaRow {
                        minuend: m,
                        subtrahend: s,
                        task_size: size,
                        alpha: a.alpha.zip(b.alpha).map(|(x, y)| x - y),
                        time_min: a.time_min - b.time_min,
                        payment: a.payment - b.payment,
                        accuracy: a.accuracy - b.accuracy,
                    });
                }
            }
        }
        Ok(SimReport { rows, deltas })
    }

    /// `method,hierarchy,visual_properties,alpha,time_min,payment`, then the
    /// delta rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "hierarchy",
            "visual_properties",
            "alpha",
            "time_min",
            "payment",
        ])
        .expect("in-memory write");
        let yn = |b: bool| if b { "yes" } else { "no" }.to_string();
        for r in &self.rows {
            w.write_record([
                r.method_label(),
                yn(r.protocol.uses_hierarchy()),
                yn(r.protocol.uses_visual_properties()),
                fmt_opt(r.alpha),
                format!("{:.2}", r.time_min),
                format!("{:.2}", r.payment),
            ])
            .expect("in-memory write");
        }
        for d in &self.deltas {
            w.write_record([
                d.label(),
                String::new(),
                String::new(),
                d.alpha.map_or_else(|| "n/a".into(), |a| format!("{a:+.3}")),
                format!("{:+.2}", d.time_min),
                format!("{:+.2}", d.payment),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Cost columns: `method,images,tasks,annotators,mean_questions,time_min,payment`.
    pub fn cost_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "images",
            "tasks",
            "annotators",
            "mean_questions",
            "time_min",
            "payment",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.method_label(),
                r.images.to_string(),
                r.tasks.to_string(),
                r.annotators.to_string(),
                format!("{:.3}", r.mean_questions),
                format!("{:.2}", r.time_min),
                format!("{:.2}", r.payment),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:<9} {:<7} {:>7} {:>10} {:>8} {:>8} {:>9}",
            "method",
            "hierarchy",
            "visual",
            "alpha",
            "time_min*",
            "payment",
            "accuracy",
            "escalated"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<10} {:<9} {:<7} {:>7} {:>10.2} {:>8.2} {:>8.3} {:>9}",
                r.method_label(),
                if r.protocol.uses_hierarchy() {
                    "yes"
                } else {
                    "no"
                },
                if r.protocol.uses_visual_properties() {
                    "yes"
                } else {
                    "no"
                },
                fmt_opt(r.alpha),
                r.time_min,
                r.payment,
                r.accuracy,
                r.escalated_images
            );
        }
        for d in &self.deltas {
            let _ = writeln!(
                out,
                "{:<10} {:<9} {:<7} {:>7} {:>+10.2} {:>+8.2} {:>+8.3}",
                d.label(),
                "",
                "",
                d.alpha.map_or_else(|| "n/a".into(), |a| format!("{a:+.3}")),
                d.time_min,
                d.payment,
                d.accuracy
            );
        }
        out.push_str("* simulated from the rate model, not measured\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HierarchySource {
    Path(String),
    Inline(HierarchyDocument),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_per_leaf: usize,
    #[serde(default)]
    pub out_of_scope_fraction: f64,
    pub seed: u64,
}

/// Method-comparison configuration.
///
/// `models` maps a protocol letter, or `default`, to its model population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub hierarchy: HierarchySource,
    pub corpus: CorpusConfig,
    pub models: BTreeMap<String, Vec<AnnotatorModel>>,
    pub protocols: Vec<Protocol>,
    pub sizes: Vec<usize>,
    pub seed: u64,
    #[serde(default, flatten)]
    pub options: Option<RunOptions>,
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    /// Loads a config file; a hierarchy path is resolved against its folder.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Hierarchy), SimError> {
        let path = path.as_ref();
        let cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        let h = cfg.resolve_hierarchy(path.parent())?;
        Ok((cfg, h))
    }

    pub fn resolve_hierarchy(&self, base: Option<&Path>) -> Result<Hierarchy, SimError> {
        match &self.hierarchy {
            HierarchySource::Inline(doc) => Ok(Hierarchy::from_document(doc)?),
            HierarchySource::Path(p) => {
                let full = base.map_or_else(|| Path::new(p).to_path_buf(), |b| b.join(p));
                Ok(Hierarchy::parse(&std::fs::read_to_string(full)?)?)
            }
        }
    }

    pub fn models_for(&self, protocol: Protocol) -> Result<&[AnnotatorModel], SimError> {
        self.models
            .get(protocol.letter())
            .or_else(|| self.models.get("default"))
            .map(Vec::as_slice)
            .ok_or_else(|| SimError::Config(format!("no annotator models for {protocol}")))
    }
}

/// Runs every (protocol, size) pair on one shared corpus.
pub fn run_method_comparison(cfg: &SimConfig, h: &Hierarchy) -> Result<SimReport, SimError> {
    if cfg.protocols.is_empty() || cfg.sizes.is_empty() {
        return Err(SimError::Config(
            "protocols and sizes must be non-empty".into(),
        ));
    }
    let corpus = generate_synthetic_corpus(
        h,
        cfg.corpus.n_per_leaf,
        cfg.corpus.out_of_scope_fraction,
        cfg.corpus.seed,
    )?;
    let options = cfg.options.clone().unwrap_or_default();
    let mut rows = Vec::new();
    for &protocol in &cfg.protocols {
        for &size in &cfg.sizes {
            let run = run_campaign(
                h,
                &corpus,
                cfg.models_for(protocol)?,
                protocol,
                size,
                cfg.seed,
                &options,
            )?;
            rows.push(run.row);
        }
    }
    SimReport::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn yes_no(subject: &str) -> Question {
        Question {
            sequence_no: 1,
            kind: QuestionKind::DifferentiaYesNo,
            subject: Some(subject.parse().unwrap()),
            prompt_name: String::new(),
            prompt_genus: None,
            prompt_differentia: None,
            choices: vec![],
            allows_none: false,
        }
    }

    #[test]
    fn corpus_sizes() {
        let h = fixtures::twelve_categories();
        let c = generate_synthetic_corpus(&h, 100, 0.0, 1).unwrap();
        assert_eq!(c.image_ids.len(), 1200);
        let c = generate_synthetic_corpus(&h, 1, 0.0, 1).unwrap();
        assert_eq!(c.image_ids.len(), 12);
        assert_eq!(out_of_scope_count(100, 0.1), 11);
        assert_eq!(out_of_scope_count(100, 0.0), 0);
        let a = generate_synthetic_corpus(&h, 5, 0.2, 9).unwrap();
        let b = generate_synthetic_corpus(&h, 5, 0.2, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.truth
                .values()
                .filter(|t| **t == Truth::OutOfScope)
                .count(),
            15
        );
        assert!(generate_synthetic_corpus(&h, 0, 0.0, 1).is_err());
        assert!(generate_synthetic_corpus(&h, 1, 1.0, 1).is_err());
    }

    #[test]
    fn answer_rules() {
        let truth: GroundTruth = [("x".to_string(), Truth::Leaf("1-1-1".parse().unwrap()))].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let oracle = AnnotatorModel::oracle(1);
        assert_eq!(
            simulated_answer(&oracle, &truth, "x", &yes_no("1"), &mut rng),
            Answer::Yes
        );
        assert_eq!(
            simulated_answer(&oracle, &truth, "x", &yes_no("2"), &mut rng),
            Answer::No
        );
        let shallow = AnnotatorModel {
            knowledge_depth: Some(1),
            ..oracle.clone()
        };
        assert_eq!(
            simulated_answer(&shallow, &truth, "x", &yes_no("1-1"), &mut rng),
            Answer::No
        );
        let liar = AnnotatorModel::noisy(0.0, 1);
        assert_eq!(
            simulated_answer(&liar, &truth, "x", &yes_no("1"), &mut rng),
            Answer::No
        );
    }

    #[test]
    fn shallow_annotators_stop_at_roots() {
        let h = fixtures::goldfinch();
        let corpus = generate_synthetic_corpus(&h, 4, 0.0, 3).unwrap();
        let shallow = AnnotatorModel {
            knowledge_depth: Some(1),
            ..AnnotatorModel::oracle(1)
        };
        let models = vec![shallow.clone(), shallow.clone(), shallow];
        let run = run_campaign(
            &h,
            &corpus,
            &models,
            Protocol::MethodC,
            2,
            5,
            &RunOptions::default(),
        )
        .unwrap();
        let finals = run.campaign.state().final_results();
        assert_eq!(finals.len(), 12);
        for (id, o) in &finals {
            assert_eq!(o.label.as_ref().unwrap().depth(), 1);
            let under_bird = corpus.truth[id] == Truth::Leaf("1-1-1".parse().unwrap());
            let expected = if under_bird {
                OutcomeKind::UnrecognisedAt
            } else {
                OutcomeKind::Classified
            };
            assert_eq!(o.kind, expected);
        }
    }

    #[test]
    fn too_few_models() {
        let h = fixtures::goldfinch();
        let corpus = generate_synthetic_corpus(&h, 1, 0.0, 3).unwrap();
        let r = run_campaign(
            &h,
            &corpus,
            &[AnnotatorModel::oracle(1)],
            Protocol::MethodA,
            5,
            1,
            &RunOptions::default(),
        );
        assert!(matches!(r, Err(SimError::Config(_))));
    }
}
