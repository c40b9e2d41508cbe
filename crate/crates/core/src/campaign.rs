//! Event-sourced campaign state.
//!
//! Every accepted command becomes one primary event. Applying a primary event
//! may produce derived events (next question, finished session, completed
//! task, consensus, escalation), which are logged right after it. Replaying the
//! log recomputes the derived events and checks them against the record.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{
    aggregate, build_tasks, AssignmentError, ConsensusKind, ConsensusPolicy, Task, TaskId, Vote,
    VoteSet, DEFAULT_ESCALATION_CAP, DEFAULT_REPLICATION, DEFAULT_TASK_SIZE,
};
use crate::engine::{
    start_session, AnnotationSession, Answer, EngineError, LabelOutcome, Protocol, Question,
    SessionId, Step,
};
use crate::hierarchy::{Hierarchy, HierarchyDocument, HierarchyError};
use crate::reliability::{
    krippendorff_alpha_nominal, ReliabilityData, ReliabilityError, SessionRecord,
};
use crate::storage::{EventLog, ImageRecord, LogError, Record};

fn default_task_size() -> usize {
    DEFAULT_TASK_SIZE
}

fn default_replication() -> usize {
    DEFAULT_REPLICATION
}

fn default_escalation_cap() -> usize {
    DEFAULT_ESCALATION_CAP
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSettings {
    pub protocol: Protocol,
    #[serde(default = "default_task_size")]
    pub task_size: usize,
    #[serde(default = "default_replication")]
    pub replication: usize,
    #[serde(default = "default_escalation_cap")]
    pub escalation_cap: usize,
    /// Idle time after which an active claim may be expired.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_timeout_ms: Option<u64>,
    /// Secret for deriving annotator tokens; random when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_secret: Option<String>,
}

impl CampaignSettings {
    pub fn new(protocol: Protocol) -> Self {
        CampaignSettings {
            protocol,
            task_size: DEFAULT_TASK_SIZE,
            replication: DEFAULT_REPLICATION,
            escalation_cap: DEFAULT_ESCALATION_CAP,
            claim_timeout_ms: None,
            token_secret: None,
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.task_size < 1 {
            return Err(CampaignError::Config("task_size must be at least 1".into()));
        }
        if self.replication < 2 {
            return Err(CampaignError::Config(
                "replication must be at least 2 for consensus".into(),
            ));
        }
        if self.escalation_cap < self.replication {
            return Err(CampaignError::Config(format!(
                "escalation_cap {} is below replication {}",
                self.escalation_cap, self.replication
            )));
        }
        Ok(())
    }

    pub fn policy(&self) -> ConsensusPolicy {
        ConsensusPolicy {
            target_replication: self.replication,
            max_replication: self.escalation_cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseReason {
    Timeout,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    CampaignCreated {
        campaign_id: String,
        settings: CampaignSettings,
        hierarchy: HierarchyDocument,
        images: Vec<ImageRecord>,
    },
    AnnotatorRegistered {
        annotator_id: String,
        token_digest: String,
    },
    TaskClaimed {
        annotator_id: String,
        task_id: TaskId,
        /// Escalation task opened by this claim.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        new_task: Option<Task>,
    },
    SessionStarted {
        session_id: SessionId,
        annotator_id: String,
        task_id: TaskId,
        image_id: String,
    },
    QuestionAsked {
        session_id: SessionId,
        question: Question,
    },
    AnswerGiven {
        session_id: SessionId,
        sequence_no: u32,
        answer: Answer,
    },
    SessionFinished {
        session_id: SessionId,
        outcome: LabelOutcome,
    },
    TaskCompleted {
        annotator_id: String,
        task_id: TaskId,
    },
    ConsensusReached {
        image_id: String,
        status: ConsensusKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<LabelOutcome>,
        votes: usize,
    },
    EscalationOpened {
        image_id: String,
        round: u32,
    },
    ClaimExpired {
        annotator_id: String,
        task_id: TaskId,
        reason: ReleaseReason,
    },
}

impl Event {
    /// Derived events follow from the primary event before them.
    pub fn is_derived(&self) -> bool {
        matches!(
            self,
            Event::QuestionAsked { .. }
                | Event::SessionFinished { .. }
                | Event::TaskCompleted { .. }
                | Event::ConsensusReached { .. }
                | Event::EscalationOpened { .. }
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Event::CampaignCreated { .. } => "campaign_created",
            Event::AnnotatorRegistered { .. } => "annotator_registered",
            Event::TaskClaimed { .. } => "task_claimed",
            Event::SessionStarted { .. } => "session_started",
            Event::QuestionAsked { .. } => "question_asked",
            Event::AnswerGiven { .. } => "answer_given",
            Event::SessionFinished { .. } => "session_finished",
            Event::TaskCompleted { .. } => "task_completed",
            Event::ConsensusReached { .. } => "consensus_reached",
            Event::EscalationOpened { .. } => "escalation_opened",
            Event::ClaimExpired { .. } => "claim_expired",
        }
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid hierarchy: {0}")]
    Hierarchy(#[from] HierarchyError),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("stale sequence number {got}; the pending question is {expected}")]
    StaleSequence { expected: u32, got: u32 },
    #[error("{0}")]
    Engine(#[from] EngineError),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("campaign is read-only after a failed log write; reopen it from its log")]
    Poisoned,
}

impl From<AssignmentError> for CampaignError {
    fn from(e: AssignmentError) -> Self {
        match e {
            AssignmentError::Config(m) => CampaignError::Config(m),
            AssignmentError::Integrity(m) => CampaignError::Integrity(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regular,
    Escalation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskState {
    pub task: Task,
    pub kind: TaskKind,
    /// Independent passes the task needs in total.
    pub passes_needed: usize,
    pub completed: Vec<String>,
    pub active: Vec<String>,
}

impl TaskState {
    pub fn remaining(&self) -> usize {
        self.passes_needed
            .saturating_sub(self.completed.len() + self.active.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStatus {
    Active,
    Completed,
    Expired,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Claim {
    pub annotator_id: String,
    pub task_id: TaskId,
    pub claimed_at: u64,
    pub last_activity: u64,
    pub status: ClaimStatus,
    pub sessions: BTreeMap<String, SessionId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnotatorState {
    pub annotator_id: String,
    pub token_digest: String,
    /// Images in any task ever claimed by this annotator.
    pub seen: BTreeSet<String>,
    pub active_claim: Option<TaskId>,
    pub completed_tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionEntry {
    pub annotator_id: String,
    pub task_id: TaskId,
    pub session: AnnotationSession,
    pub abandoned: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ImageStatus {
    Pending,
    Escalated { round: u32 },
    Final { label: LabelOutcome },
    Unresolved,
}

/// What [`CampaignState::assign_next`] would hand an annotator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClaimPlan {
    /// The annotator already holds this claim.
    Existing(TaskId),
    /// Claim an existing task.
    Take(TaskId),
    /// Open and claim a new escalation task.
    Open(Task),
    Nothing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnotatorProgress {
    pub annotator_id: String,
    pub active_task: Option<TaskId>,
    pub completed_tasks: usize,
    pub finished_sessions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub images: usize,
    pub finalized: usize,
    pub pending: usize,
    pub escalated: usize,
    pub unresolved: usize,
    pub tasks: usize,
    pub open_tasks: usize,
    pub annotators: Vec<AnnotatorProgress>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignState {
    id: String,
    settings: CampaignSettings,
    hierarchy: Arc<Hierarchy>,
    images: Vec<ImageRecord>,
    image_pos: BTreeMap<String, usize>,
    tasks: Vec<TaskState>,
    task_index: BTreeMap<TaskId, usize>,
    annotators: BTreeMap<String, AnnotatorState>,
    annotator_order: Vec<String>,
    claims: BTreeMap<(String, TaskId), Claim>,
    sessions: BTreeMap<SessionId, SessionEntry>,
    votes: BTreeMap<String, VoteSet>,
    status: BTreeMap<String, ImageStatus>,
    /// Escalated images waiting for a task, keyed by manifest position.
    pool: BTreeSet<(usize, String)>,
    session_counter: u64,
    escalation_counter: u64,
}

impl CampaignState {
    /// Builds the initial state from a `CampaignCreated` event.
    pub fn genesis(event: &Event) -> Result<Self, CampaignError> {
        let Event::CampaignCreated {
            campaign_id,
            settings,
            hierarchy,
            images,
        } = event
        else {
            return Err(CampaignError::Integrity(format!(
                "log must start with campaign_created, found {}",
                event.kind_name()
            )));
        };
        settings.validate()?;
        let hierarchy = Hierarchy::from_document(hierarchy)?;
        if hierarchy.is_empty() {
            return Err(CampaignError::Config("hierarchy has no categories".into()));
        }
        let annotatable: Vec<String> = images
            .iter()
            .filter(|r| !r.excluded)
            .map(|r| r.image_id.clone())
            .collect();
        let mut image_pos = BTreeMap::new();
        for (i, r) in images.iter().enumerate() {
            if image_pos.insert(r.image_id.clone(), i).is_some() {
                return Err(CampaignError::Validation(format!(
                    "image {} listed twice",
                    r.image_id
                )));
            }
        }
        let tasks: Vec<TaskState> =
            build_tasks(&annotatable, settings.task_size, settings.protocol)?
                .into_iter()
                .map(|task| TaskState {
                    task,
                    kind: TaskKind::Regular,
                    passes_needed: settings.replication,
                    completed: Vec::new(),
                    active: Vec::new(),
                })
                .collect();
        let task_index = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.task.task_id.clone(), i))
            .collect();
        let status = annotatable
            .iter()
            .map(|id| (id.clone(), ImageStatus::Pending))
            .collect();
        Ok(CampaignState {
            id: campaign_id.clone(),
            settings: settings.clone(),
            hierarchy: Arc::new(hierarchy),
            images: images.clone(),
            image_pos,
            tasks,
            task_index,
            annotators: BTreeMap::new(),
            annotator_order: Vec::new(),
            claims: BTreeMap::new(),
            sessions: BTreeMap::new(),
            votes: BTreeMap::new(),
            status,
            pool: BTreeSet::new(),
            session_counter: 0,
            escalation_counter: 0,
        })
    }

    /// Rebuilds state from log records, verifying every derived record.
    pub fn replay(records: &[Record]) -> Result<Self, CampaignError> {
        let (first, rest) = records
            .split_first()
            .ok_or_else(|| CampaignError::Integrity("event log is empty".into()))?;
        let mut state = Self::genesis(&first.event)?;
        let mut expected: std::collections::VecDeque<Event> = Default::default();
        let mut prev_seq = first.seq;
        for rec in rest {
            if rec.seq <= prev_seq {
                return Err(CampaignError::Integrity(format!(
                    "record {} follows {}",
                    rec.seq, prev_seq
                )));
            }
            prev_seq = rec.seq;
            if rec.event.is_derived() {
                match expected.pop_front() {
                    Some(e) if e == rec.event => {}
                    Some(e) => {
                        return Err(CampaignError::Integrity(format!(
                            "record {}: logged {} differs from recomputed {}",
                            rec.seq,
                            rec.event.kind_name(),
                            e.kind_name()
                        )))
                    }
                    None => {
                        return Err(CampaignError::Integrity(format!(
                            "record {}: unexpected derived {}",
                            rec.seq,
                            rec.event.kind_name()
                        )))
                    }
                }
            } else {
                if let Some(e) = expected.front() {
                    return Err(CampaignError::Integrity(format!(
                        "record {}: {} is missing before {}",
                        rec.seq,
                        e.kind_name(),
                        rec.event.kind_name()
                    )));
                }
                let derived = state
                    .apply(&rec.event, rec.ts)
                    .map_err(|e| CampaignError::Integrity(format!("record {}: {e}", rec.seq)))?;
                expected.extend(derived);
            }
        }
        if let Some(e) = expected.front() {
            return Err(CampaignError::Integrity(format!(
                "log ends before derived {}",
                e.kind_name()
            )));
        }
        Ok(state)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn settings(&self) -> &CampaignSettings {
        &self.settings
    }

    pub fn protocol(&self) -> Protocol {
        self.settings.protocol
    }

    pub fn hierarchy(&self) -> &Arc<Hierarchy> {
        &self.hierarchy
    }

    /// Every manifest record, excluded ones included.
    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.image_pos.get(image_id).map(|&i| &self.images[i])
    }

    pub fn tasks(&self) -> &[TaskState] {
        &self.tasks
    }

    pub fn task(&self, task_id: &TaskId) -> Result<&TaskState, CampaignError> {
        self.task_index
            .get(task_id)
            .map(|&i| &self.tasks[i])
            .ok_or_else(|| CampaignError::NotFound(format!("task {task_id}")))
    }

    pub fn annotator(&self, annotator_id: &str) -> Result<&AnnotatorState, CampaignError> {
        self.annotators
            .get(annotator_id)
            .ok_or_else(|| CampaignError::NotFound(format!("annotator {annotator_id}")))
    }

    /// Annotator ids in registration order.
    pub fn annotator_ids(&self) -> &[String] {
        &self.annotator_order
    }

    pub fn claim(&self, annotator_id: &str, task_id: &TaskId) -> Option<&Claim> {
        self.claims
            .get(&(annotator_id.to_string(), task_id.clone()))
    }

    pub fn claims(&self) -> impl Iterator<Item = &Claim> {
        self.claims.values()
    }

    pub fn session(&self, session_id: &SessionId) -> Result<&SessionEntry, CampaignError> {
        self.sessions
            .get(session_id)
            .ok_or_else(|| CampaignError::NotFound(format!("session {session_id}")))
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SessionEntry> {
        self.sessions.values()
    }

    pub fn votes(&self, image_id: &str) -> Option<&VoteSet> {
        self.votes.get(image_id)
    }

    pub fn status(&self, image_id: &str) -> Option<&ImageStatus> {
        self.status.get(image_id)
    }

    /// Votes collected beyond the target replication.
    pub fn escalations(&self, image_id: &str) -> usize {
        self.votes
            .get(image_id)
            .map_or(0, |v| v.len().saturating_sub(self.settings.replication))
    }

    pub fn next_session_id(&self) -> SessionId {
        SessionId(format!("s{:06}", self.session_counter + 1))
    }

    /// Annotatable image ids in manifest order.
    pub fn annotatable_ids(&self) -> impl Iterator<Item = &str> {
        self.images
            .iter()
            .filter(|r| !r.excluded)
            .map(|r| r.image_id.as_str())
    }

    /// Final labels in manifest order.
    pub fn final_results(&self) -> Vec<(String, LabelOutcome)> {
        self.annotatable_ids()
            .filter_map(|id| match self.status.get(id) {
                Some(ImageStatus::Final { label }) => Some((id.to_string(), label.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.status
            .values()
            .all(|s| matches!(s, ImageStatus::Final { .. } | ImageStatus::Unresolved))
    }

    pub fn progress(&self) -> Progress {
        let mut p = Progress {
            images: self.status.len(),
            finalized: 0,
            pending: 0,
            escalated: 0,
            unresolved: 0,
            tasks: self.tasks.len(),
            open_tasks: self
                .tasks
                .iter()
                .filter(|t| t.completed.len() < t.passes_needed)
                .count(),
            annotators: Vec::new(),
        };
        for s in self.status.values() {
            match s {
                ImageStatus::Pending => p.pending += 1,
                ImageStatus::Escalated { .. } => p.escalated += 1,
                ImageStatus::Final { .. } => p.finalized += 1,
                ImageStatus::Unresolved => p.unresolved += 1,
            }
        }
        for id in &self.annotator_order {
            let a = &self.annotators[id];
            p.annotators.push(AnnotatorProgress {
                annotator_id: id.clone(),
                active_task: a.active_claim.clone(),
                completed_tasks: a.completed_tasks,
                finished_sessions: self
                    .sessions
                    .values()
                    .filter(|s| &s.annotator_id == id && s.session.is_finished())
                    .count(),
            });
        }
        p
    }

    /// Counted votes as a units-by-annotators matrix.
    ///
    /// With `collapse_upper`, every label assigned above the leaves counts as
    /// one "Unrecognised" value.
    pub fn reliability_data(&self, collapse_upper: bool) -> ReliabilityData {
        let units: Vec<String> = self
            .annotatable_ids()
            .filter(|id| self.votes.get(*id).is_some_and(|v| !v.is_empty()))
            .map(str::to_string)
            .collect();
        let mut data = ReliabilityData::new(units.clone(), self.annotator_order.clone());
        let col: BTreeMap<&str, usize> = self
            .annotator_order
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i))
            .collect();
        for (u, id) in units.iter().enumerate() {
            for v in &self.votes[id].votes {
                let key = v.outcome.key();
                let value = if collapse_upper {
                    key.collapsed()
                } else {
                    key.to_string()
                };
                data.set(u, col[v.annotator_id.as_str()], Some(value));
            }
        }
        data
    }

    pub fn alpha(&self, collapse_upper: bool) -> Result<f64, ReliabilityError> {
        krippendorff_alpha_nominal(&self.reliability_data(collapse_upper))
    }

    /// One record per finished session of a completed claim.
    pub fn session_records(&self) -> Vec<SessionRecord> {
        let mut out = Vec::new();
        for c in self
            .claims
            .values()
            .filter(|c| c.status == ClaimStatus::Completed)
        {
            for sid in c.sessions.values() {
                let s = &self.sessions[sid].session;
                if let Some(o) = s.outcome() {
                    out.push(SessionRecord {
                        pass_id: format!("{}/{}", c.task_id, c.annotator_id),
                        protocol: self.settings.protocol,
                        task_size: self.settings.task_size,
                        question_count: o.question_count,
                    });
                }
            }
        }
        out
    }

    /// Chooses the next task for an annotator without changing state.
    pub fn assign_next(&self, annotator_id: &str) -> Result<ClaimPlan, CampaignError> {
        let a = self.annotator(annotator_id)?;
        if let Some(t) = &a.active_claim {
            return Ok(ClaimPlan::Existing(t.clone()));
        }
        let mut best: Option<(usize, usize, ClaimPlan)> = None;
        for (i, t) in self.tasks.iter().enumerate() {
            if self.eligible(a, t) {
                let key = (t.remaining(), i);
                if best.as_ref().is_none_or(|b| key < (b.0, b.1)) {
                    best = Some((key.0, key.1, ClaimPlan::Take(t.task.task_id.clone())));
                }
            }
        }
        let fresh: Vec<String> = self
            .pool
            .iter()
            .filter(|(_, id)| !a.seen.contains(id))
            .take(self.settings.task_size)
            .map(|(_, id)| id.clone())
            .collect();
        if !fresh.is_empty() {
            let key = (1, self.tasks.len());
            if best.as_ref().is_none_or(|b| key < (b.0, b.1)) {
                best = Some((
                    key.0,
                    key.1,
                    ClaimPlan::Open(Task {
                        task_id: TaskId(format!("e{:04}", self.escalation_counter + 1)),
                        image_ids: fresh,
                        protocol: self.settings.protocol,
                        size: self.settings.task_size,
                    }),
                ));
            }
        }
        Ok(best.map_or(ClaimPlan::Nothing, |b| b.2))
    }

    fn eligible(&self, a: &AnnotatorState, t: &TaskState) -> bool {
        t.remaining() > 0
            && !self
                .claims
                .contains_key(&(a.annotator_id.clone(), t.task.task_id.clone()))
            && t.task.image_ids.iter().all(|i| !a.seen.contains(i))
    }

    fn active_claim_mut(
        &mut self,
        annotator_id: &str,
        task_id: &TaskId,
    ) -> Result<&mut Claim, CampaignError> {
        match self
            .claims
            .get_mut(&(annotator_id.to_string(), task_id.clone()))
        {
            Some(c) if c.status == ClaimStatus::Active => Ok(c),
            _ => Err(CampaignError::Conflict(format!(
                "{annotator_id} holds no active claim on task {task_id}"
            ))),
        }
    }

    /// Validates and applies a primary event, returning the derived events it
    /// produced (already applied).
    pub fn apply(&mut self, event: &Event, ts: u64) -> Result<Vec<Event>, CampaignError> {
        let mut out = Vec::new();
        match event {
            Event::CampaignCreated { .. } => {
                return Err(CampaignError::Conflict("campaign already exists".into()))
            }
            e if e.is_derived() => {
                return Err(CampaignError::Integrity(format!(
                    "{} cannot be applied directly",
                    e.kind_name()
                )))
            }
            Event::AnnotatorRegistered {
                annotator_id,
                token_digest,
            } => {
                if annotator_id.trim().is_empty() {
                    return Err(CampaignError::Validation("annotator id is empty".into()));
                }
                if self.annotators.contains_key(annotator_id) {
                    return Err(CampaignError::Conflict(format!(
                        "annotator {annotator_id} is already registered"
                    )));
                }
                self.annotators.insert(
                    annotator_id.clone(),
                    AnnotatorState {
                        annotator_id: annotator_id.clone(),
                        token_digest: token_digest.clone(),
                        seen: BTreeSet::new(),
                        active_claim: None,
                        completed_tasks: 0,
                    },
                );
                self.annotator_order.push(annotator_id.clone());
            }
            Event::TaskClaimed {
                annotator_id,
                task_id,
                new_task,
            } => self.apply_claim(annotator_id, task_id, new_task.as_ref(), ts)?,
            Event::SessionStarted {
                session_id,
                annotator_id,
                task_id,
                image_id,
            } => {
                self.annotator(annotator_id)?;
                if !self.task(task_id)?.task.image_ids.contains(image_id) {
                    return Err(CampaignError::Validation(format!(
                        "image {image_id} is not part of task {task_id}"
                    )));
                }
                let expected = self.next_session_id();
                if self
                    .active_claim_mut(annotator_id, task_id)?
                    .sessions
                    .contains_key(image_id)
                {
                    return Err(CampaignError::Conflict(format!(
                        "{annotator_id} already has a session for image {image_id}"
                    )));
                }
                if *session_id != expected {
                    return Err(CampaignError::Integrity(format!(
                        "session id {session_id} out of order, expected {expected}"
                    )));
                }
                let (session, question) = start_session(
                    session_id.clone(),
                    Arc::clone(&self.hierarchy),
                    image_id.clone(),
                    self.settings.protocol,
                )?;
                let claim = self.active_claim_mut(annotator_id, task_id)?;
                claim.sessions.insert(image_id.clone(), session_id.clone());
                claim.last_activity = ts;
                self.sessions.insert(
                    session_id.clone(),
                    SessionEntry {
                        annotator_id: annotator_id.clone(),
                        task_id: task_id.clone(),
                        session,
                        abandoned: false,
                    },
                );
                self.session_counter += 1;
                out.push(Event::QuestionAsked {
                    session_id: session_id.clone(),
                    question,
                });
            }
            Event::AnswerGiven {
                session_id,
                sequence_no,
                answer,
            } => {
                let entry = self.session(session_id)?;
                if entry.abandoned {
                    return Err(CampaignError::Conflict(format!(
                        "session {session_id} belongs to a released claim"
                    )));
                }
                let pending = entry
                    .session
                    .pending_question()
                    .ok_or(CampaignError::Engine(EngineError::Finished))?;
                if pending.sequence_no != *sequence_no {
                    return Err(CampaignError::StaleSequence {
                        expected: pending.sequence_no,
                        got: *sequence_no,
                    });
                }
                entry.session.check_answer(answer)?;
                let (annotator_id, task_id) = (entry.annotator_id.clone(), entry.task_id.clone());
                let entry = self.sessions.get_mut(session_id).expect("looked up above");
                let step = entry.session.submit_answer(answer.clone())?;
                self.active_claim_mut(&annotator_id, &task_id)?
                    .last_activity = ts;
                match step {
                    Step::Next { question } => out.push(Event::QuestionAsked {
                        session_id: session_id.clone(),
                        question,
                    }),
                    Step::Finished { outcome } => {
                        out.push(Event::SessionFinished {
                            session_id: session_id.clone(),
                            outcome,
                        });
                        if self.claim_done(&annotator_id, &task_id) {
                            self.complete_task(&annotator_id, &task_id, &mut out)?;
                        }
                    }
                }
            }
            Event::ClaimExpired {
                annotator_id,
                task_id,
                reason,
            } => {
                let claim = self.active_claim_mut(annotator_id, task_id)?;
                claim.status = match reason {
                    ReleaseReason::Timeout => ClaimStatus::Expired,
                    ReleaseReason::Abandoned => ClaimStatus::Abandoned,
                };
                let sids: Vec<SessionId> = claim.sessions.values().cloned().collect();
                for sid in sids {
                    if let Some(s) = self.sessions.get_mut(&sid) {
                        s.abandoned = true;
                    }
                }
                let i = self.task_index[task_id];
                self.tasks[i].active.retain(|a| a != annotator_id);
                if let Some(a) = self.annotators.get_mut(annotator_id) {
                    a.active_claim = None;
                }
            }
            _ => unreachable!("derived events are rejected above"),
        }
        Ok(out)
    }

    fn apply_claim(
        &mut self,
        annotator_id: &str,
        task_id: &TaskId,
        new_task: Option<&Task>,
        ts: u64,
    ) -> Result<(), CampaignError> {
        let a = self.annotator(annotator_id)?;
        if let Some(t) = &a.active_claim {
            return Err(CampaignError::Conflict(format!(
                "{annotator_id} already holds task {t}"
            )));
        }
        if self
            .claims
            .contains_key(&(annotator_id.to_string(), task_id.clone()))
        {
            return Err(CampaignError::Conflict(format!(
                "{annotator_id} has already claimed task {task_id}"
            )));
        }
        match new_task {
            Some(t) => {
                let expected = TaskId(format!("e{:04}", self.escalation_counter + 1));
                if &t.task_id != task_id || t.task_id != expected {
                    return Err(CampaignError::Integrity(format!(
                        "escalation task {} out of order, expected {expected}",
                        t.task_id
                    )));
                }
                if t.image_ids.is_empty() || t.image_ids.len() > self.settings.task_size {
                    return Err(CampaignError::Validation(format!(
                        "escalation task {} has {} images",
                        t.task_id,
                        t.image_ids.len()
                    )));
                }
                for id in &t.image_ids {
                    let pos = *self
                        .image_pos
                        .get(id)
                        .ok_or_else(|| CampaignError::NotFound(format!("image {id}")))?;
                    if !self.pool.contains(&(pos, id.clone())) || a.seen.contains(id) {
                        return Err(CampaignError::Conflict(format!(
                            "image {id} is not awaiting escalation for {annotator_id}"
                        )));
                    }
                }
                for id in &t.image_ids {
                    self.pool.remove(&(self.image_pos[id], id.clone()));
                }
                self.escalation_counter += 1;
                self.task_index.insert(t.task_id.clone(), self.tasks.len());
                self.tasks.push(TaskState {
                    task: t.clone(),
                    kind: TaskKind::Escalation,
                    passes_needed: 1,
                    completed: Vec::new(),
                    active: Vec::new(),
                });
            }
            None => {
                let t = self.task(task_id)?;
                if !self.eligible(a, t) {
                    return Err(CampaignError::Conflict(format!(
                        "task {task_id} is not available to {annotator_id}"
                    )));
                }
            }
        }
        let i = self.task_index[task_id];
        self.tasks[i].active.push(annotator_id.to_string());
        let images = self.tasks[i].task.image_ids.clone();
        let a = self
            .annotators
            .get_mut(annotator_id)
            .expect("checked above");
        a.seen.extend(images);
        a.active_claim = Some(task_id.clone());
        self.claims.insert(
            (annotator_id.to_string(), task_id.clone()),
            Claim {
                annotator_id: annotator_id.to_string(),
                task_id: task_id.clone(),
                claimed_at: ts,
                last_activity: ts,
                status: ClaimStatus::Active,
                sessions: BTreeMap::new(),
            },
        );
        Ok(())
    }

    fn claim_done(&self, annotator_id: &str, task_id: &TaskId) -> bool {
        let Some(claim) = self.claim(annotator_id, task_id) else {
            return false;
        };
        let Ok(task) = self.task(task_id) else {
            return false;
        };
        task.task.image_ids.iter().all(|img| {
            claim
                .sessions
                .get(img)
                .is_some_and(|sid| self.sessions[sid].session.is_finished())
        })
    }

    fn complete_task(
        &mut self,
        annotator_id: &str,
        task_id: &TaskId,
        out: &mut Vec<Event>,
    ) -> Result<(), CampaignError> {
        let key = (annotator_id.to_string(), task_id.clone());
        let claim = self.claims.get_mut(&key).expect("claim checked");
        claim.status = ClaimStatus::Completed;
        let sessions = claim.sessions.clone();
        let i = self.task_index[task_id];
        self.tasks[i].active.retain(|a| a != annotator_id);
        self.tasks[i].completed.push(annotator_id.to_string());
        let a = self.annotators.get_mut(annotator_id).expect("registered");
        a.active_claim = None;
        a.completed_tasks += 1;
        out.push(Event::TaskCompleted {
            annotator_id: annotator_id.to_string(),
            task_id: task_id.clone(),
        });

        let policy = self.settings.policy();
        for image_id in self.tasks[i].task.image_ids.clone() {
            let outcome = self.sessions[&sessions[&image_id]]
                .session
                .outcome()
                .cloned()
                .expect("finished session");
            let votes = self
                .votes
                .entry(image_id.clone())
                .or_insert_with(|| VoteSet::new(image_id.clone()));
            votes.votes.push(Vote {
                annotator_id: annotator_id.to_string(),
                outcome,
            });
            if votes.len() < policy.target_replication {
                continue;
            }
            let n = votes.len();
            let result = aggregate(votes, policy)?;
            match result.kind {
                ConsensusKind::Final | ConsensusKind::Unresolved => {
                    let status = match &result.label {
                        Some(label) => ImageStatus::Final {
                            label: label.clone(),
                        },
                        None => ImageStatus::Unresolved,
                    };
                    self.status.insert(image_id.clone(), status);
                    out.push(Event::ConsensusReached {
                        image_id,
                        status: result.kind,
                        label: result.label,
                        votes: n,
                    });
                }
                ConsensusKind::NeedsEscalation => {
                    let round = (n + 1 - policy.target_replication) as u32;
                    self.status
                        .insert(image_id.clone(), ImageStatus::Escalated { round });
                    self.pool
                        .insert((self.image_pos[&image_id], image_id.clone()));
                    out.push(Event::EscalationOpened { image_id, round });
                }
            }
        }
        Ok(())
    }
}

/// What an opened or resumed session currently shows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionView {
    pub session_id: SessionId,
    pub image_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub question: Option<Question>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<LabelOutcome>,
}

impl SessionView {
    fn of(entry: &SessionEntry) -> Self {
        SessionView {
            session_id: entry.session.id().clone(),
            image_id: entry.session.image_id().to_string(),
            question: entry.session.pending_question().cloned(),
            outcome: entry.session.outcome().cloned(),
        }
    }
}

/// Live campaign: state plus the log it is persisted to.
#[derive(Debug)]
pub struct Campaign {
    state: CampaignState,
    log: EventLog,
    poisoned: bool,
}

impl Campaign {
    pub fn create(
        campaign_id: impl Into<String>,
        settings: CampaignSettings,
        hierarchy: &Hierarchy,
        images: Vec<ImageRecord>,
        mut log: EventLog,
        ts: u64,
    ) -> Result<Self, CampaignError> {
        if !log.is_empty() {
            return Err(CampaignError::Conflict("event log is not empty".into()));
        }
        let event = Event::CampaignCreated {
            campaign_id: campaign_id.into(),
            settings,
            hierarchy: hierarchy.to_document(),
            images,
        };
        let state = CampaignState::genesis(&event)?;
        log.append_batch(ts, vec![event])?;
        Ok(Campaign {
            state,
            log,
            poisoned: false,
        })
    }

    /// Reopens a campaign by replaying its log.
    pub fn resume(log: EventLog) -> Result<Self, CampaignError> {
        let state = CampaignState::replay(log.records())?;
        Ok(Campaign {
            state,
            log,
            poisoned: false,
        })
    }

    pub fn state(&self) -> &CampaignState {
        &self.state
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    fn commit(&mut self, event: Event, ts: u64) -> Result<Vec<Event>, CampaignError> {
        if self.poisoned {
            return Err(CampaignError::Poisoned);
        }
        let derived = match self.state.apply(&event, ts) {
            Ok(d) => d,
            Err(e @ CampaignError::Integrity(_)) => {
                self.poisoned = true;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let mut batch = Vec::with_capacity(derived.len() + 1);
        batch.push(event);
        batch.extend(derived.iter().cloned());
        if let Err(e) = self.log.append_batch(ts, batch) {
            self.poisoned = true;
            return Err(e.into());
        }
        Ok(derived)
    }

    pub fn register_annotator(
        &mut self,
        annotator_id: &str,
        token_digest: &str,
        ts: u64,
    ) -> Result<(), CampaignError> {
        self.commit(
            Event::AnnotatorRegistered {
                annotator_id: annotator_id.to_string(),
                token_digest: token_digest.to_string(),
            },
            ts,
        )
        .map(drop)
    }

    /// Claims the next task, or returns the annotator's current one.
    pub fn claim_task(
        &mut self,
        annotator_id: &str,
        ts: u64,
    ) -> Result<Option<Task>, CampaignError> {
        let (task_id, new_task) = match self.state.assign_next(annotator_id)? {
            ClaimPlan::Nothing => return Ok(None),
            ClaimPlan::Existing(t) => return Ok(Some(self.state.task(&t)?.task.clone())),
            ClaimPlan::Take(t) => (t, None),
            ClaimPlan::Open(t) => (t.task_id.clone(), Some(t)),
        };
        self.commit(
            Event::TaskClaimed {
                annotator_id: annotator_id.to_string(),
                task_id: task_id.clone(),
                new_task,
            },
            ts,
        )?;
        Ok(Some(self.state.task(&task_id)?.task.clone()))
    }

    /// Starts a session on one image of a claimed task, or returns the
    /// session already started for it.
    pub fn open_session(
        &mut self,
        annotator_id: &str,
        task_id: &TaskId,
        image_id: &str,
        ts: u64,
    ) -> Result<SessionView, CampaignError> {
        if let Some(sid) = self
            .state
            .claim(annotator_id, task_id)
            .filter(|c| c.status == ClaimStatus::Active)
            .and_then(|c| c.sessions.get(image_id))
        {
            return Ok(SessionView::of(self.state.session(sid)?));
        }
        let session_id = self.state.next_session_id();
        self.commit(
            Event::SessionStarted {
                session_id: session_id.clone(),
                annotator_id: annotator_id.to_string(),
                task_id: task_id.clone(),
                image_id: image_id.to_string(),
            },
            ts,
        )?;
        Ok(SessionView::of(self.state.session(&session_id)?))
    }

    /// Records an answer. Resubmitting an already recorded answer under the
    /// same sequence number returns the original response without logging.
    pub fn answer(
        &mut self,
        session_id: &SessionId,
        sequence_no: u32,
        answer: Answer,
        ts: u64,
    ) -> Result<Step, CampaignError> {
        let entry = self.state.session(session_id)?;
        let transcript = entry.session.transcript();
        if sequence_no >= 1 && (sequence_no as usize) <= transcript.len() {
            let k = sequence_no as usize;
            if transcript[k - 1].answer != answer {
                return Err(CampaignError::Conflict(format!(
                    "question {sequence_no} of session {session_id} was already answered differently"
                )));
            }
            return Ok(if k < transcript.len() {
                Step::Next {
                    question: transcript[k].question.clone(),
                }
            } else if let Some(q) = entry.session.pending_question() {
                Step::Next {
                    question: q.clone(),
                }
            } else {
                Step::Finished {
                    outcome: entry.session.outcome().cloned().expect("finished session"),
                }
            });
        }
        let derived = self.commit(
            Event::AnswerGiven {
                session_id: session_id.clone(),
                sequence_no,
                answer,
            },
            ts,
        )?;
        match derived.into_iter().next() {
            Some(Event::QuestionAsked { question, .. }) => Ok(Step::Next { question }),
            Some(Event::SessionFinished { outcome, .. }) => Ok(Step::Finished { outcome }),
            _ => Err(CampaignError::Integrity("answer produced no step".into())),
        }
    }

    /// Gives up an active claim; its unfinished work is discarded.
    pub fn release(
        &mut self,
        annotator_id: &str,
        task_id: &TaskId,
        ts: u64,
    ) -> Result<(), CampaignError> {
        self.commit(
            Event::ClaimExpired {
                annotator_id: annotator_id.to_string(),
                task_id: task_id.clone(),
                reason: ReleaseReason::Abandoned,
            },
            ts,
        )
        .map(drop)
    }

    /// Expires active claims idle for at least the configured timeout.
    pub fn expire_stale(&mut self, now: u64) -> Result<Vec<(String, TaskId)>, CampaignError> {
        let Some(timeout) = self.state.settings.claim_timeout_ms else {
            return Ok(Vec::new());
        };
        let stale: Vec<(String, TaskId)> = self
            .state
            .claims()
            .filter(|c| {
                c.status == ClaimStatus::Active && now.saturating_sub(c.last_activity) >= timeout
            })
            .map(|c| (c.annotator_id.clone(), c.task_id.clone()))
            .collect();
        for (a, t) in &stale {
            self.commit(
                Event::ClaimExpired {
                    annotator_id: a.clone(),
                    task_id: t.clone(),
                    reason: ReleaseReason::Timeout,
                },
                now,
            )?;
        }
        Ok(stale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::OutcomeKind;
    use crate::fixtures;

    fn images(n: usize) -> Vec<ImageRecord> {
        (1..=n)
            .map(|i| ImageRecord::original(format!("img{i}"), format!("file:///img{i}.jpg")))
            .collect()
    }

    fn settings(size: usize) -> CampaignSettings {
        CampaignSettings {
            task_size: size,
            ..CampaignSettings::new(Protocol::MethodC)
        }
    }

    fn campaign(n: usize, size: usize) -> Campaign {
        Campaign::create(
            "c0001",
            settings(size),
            &fixtures::goldfinch(),
            images(n),
            EventLog::in_memory(),
            0,
        )
        .unwrap()
    }

    /// Answers every image of the annotator's claimed task so that each gets
    /// the label chosen by `pick`: "1-1-1", "1-1", "1", "2" or "none".
    fn work_task(
        c: &mut Campaign,
        ann: &str,
        pick: impl Fn(&str) -> &'static str,
    ) -> Option<TaskId> {
        let task = c.claim_task(ann, 1).unwrap()?;
        for img in &task.image_ids {
            let view = c.open_session(ann, &task.task_id, img, 2).unwrap();
            let target = pick(img);
            let mut q = view.question;
            while let Some(question) = q {
                let subject = question.subject.clone().unwrap().to_string();
                let yes = target != "none"
                    && target.starts_with(&subject)
                    && (target == subject || target.as_bytes()[subject.len()] == b'-');
                let ans = if yes { Answer::Yes } else { Answer::No };
                q = match c
                    .answer(&view.session_id, question.sequence_no, ans, 3)
                    .unwrap()
                {
                    Step::Next { question } => Some(question),
                    Step::Finished { .. } => None,
                };
            }
        }
        Some(task.task_id)
    }

    #[test]
    fn settings_validation() {
        let mut s = settings(10);
        s.replication = 1;
        assert!(matches!(s.validate(), Err(CampaignError::Config(_))));
        s.replication = 4;
        s.escalation_cap = 3;
        assert!(s.validate().is_err());
        assert!(settings(0).validate().is_err());
    }

    #[test]
    fn three_agreeing_passes_finalize() {
        let mut c = campaign(4, 2);
        for a in ["a1", "a2", "a3"] {
            c.register_annotator(a, "d", 0).unwrap();
        }
        for a in ["a1", "a2", "a3"] {
            while work_task(&mut c, a, |_| "1-1-1").is_some() {}
        }
        let s = c.state();
        assert!(s.is_complete());
        assert_eq!(s.final_results().len(), 4);
        let (_, label) = &s.final_results()[0];
        assert_eq!(label.kind, OutcomeKind::Classified);
        assert_eq!(label.label.as_ref().unwrap().to_string(), "1-1-1");
        assert_eq!(s.tasks().len(), 2);
        assert!(s.tasks().iter().all(|t| t.completed.len() == 3));
    }

    #[test]
    fn one_active_claim_and_no_repeat_images() {
        let mut c = campaign(2, 2);
        c.register_annotator("a1", "d", 0).unwrap();
        let t = c.claim_task("a1", 1).unwrap().unwrap();
        assert_eq!(c.claim_task("a1", 1).unwrap().unwrap(), t);
        work_task(&mut c, "a1", |_| "2");
        assert!(c.claim_task("a1", 5).unwrap().is_none());
    }

    #[test]
    fn disagreement_escalates_to_a_fourth_annotator() {
        let mut c = campaign(2, 2);
        let picks = ["1-1-1", "2", "1", "2"];
        for (i, p) in picks.iter().enumerate() {
            let a = format!("a{i}");
            c.register_annotator(&a, "d", 0).unwrap();
            let p = *p;
            assert!(
                work_task(&mut c, &a, move |_| p).is_some(),
                "{a} got no task"
            );
            if i == 2 {
                assert_eq!(c.state().progress().escalated, 2);
                assert_eq!(c.state().escalations("img1"), 0);
            }
        }
        let s = c.state();
        assert_eq!(s.progress().finalized, 2);
        assert_eq!(
            s.final_results()[0].1.label.as_ref().unwrap().to_string(),
            "2"
        );
        assert_eq!(s.escalations("img1"), 1);
        assert_eq!(
            s.tasks().last().unwrap().task.task_id,
            TaskId("e0001".into())
        );
    }

    #[test]
    fn unresolved_at_cap() {
        let mut c = campaign(1, 1);
        let picks = ["1-1-1", "2", "none", "1-1", "1"];
        for (i, p) in picks.iter().enumerate() {
            let a = format!("a{i}");
            c.register_annotator(&a, "d", 0).unwrap();
            let p = *p;
            work_task(&mut c, &a, move |_| p).unwrap();
        }
        assert_eq!(c.state().status("img1"), Some(&ImageStatus::Unresolved));
        c.register_annotator("late", "d", 0).unwrap();
        assert!(c.claim_task("late", 9).unwrap().is_none());
    }

    #[test]
    fn answers_are_idempotent() {
        let mut c = campaign(1, 1);
        c.register_annotator("a", "d", 0).unwrap();
        let t = c.claim_task("a", 1).unwrap().unwrap();
        let v = c.open_session("a", &t.task_id, "img1", 1).unwrap();
        assert_eq!(c.open_session("a", &t.task_id, "img1", 1).unwrap(), v);
        let first = c.answer(&v.session_id, 1, Answer::Yes, 2).unwrap();
        let logged = c.log().len();
        assert_eq!(c.answer(&v.session_id, 1, Answer::Yes, 3).unwrap(), first);
        assert_eq!(c.log().len(), logged);
        assert!(matches!(
            c.answer(&v.session_id, 1, Answer::No, 3),
            Err(CampaignError::Conflict(_))
        ));
        assert!(matches!(
            c.answer(&v.session_id, 5, Answer::No, 3),
            Err(CampaignError::StaleSequence {
                expected: 2,
                got: 5
            })
        ));
        assert!(matches!(
            c.answer(&SessionId("s999999".into()), 1, Answer::No, 3),
            Err(CampaignError::NotFound(_))
        ));
    }

    #[test]
    fn replay_matches_live_state() {
        let mut c = campaign(3, 2);
        for a in ["a1", "a2", "a3", "a4"] {
            c.register_annotator(a, "d", 0).unwrap();
        }
        work_task(&mut c, "a1", |_| "1-1-1");
        work_task(&mut c, "a2", |i| if i == "img1" { "2" } else { "1-1-1" });
        work_task(&mut c, "a3", |_| "none");
        work_task(&mut c, "a4", |_| "1");
        let text = c.log().to_ndjson();
        let records = EventLog::parse(&text).unwrap();
        let replayed = CampaignState::replay(&records).unwrap();
        assert_eq!(&replayed, c.state());

        // Tampering with a derived record is detected.
        let tampered = text.replacen("\"status\":\"final\"", "\"status\":\"unresolved\"", 1);
        if tampered != text {
            let recs = EventLog::parse(&tampered).unwrap();
            assert!(matches!(
                CampaignState::replay(&recs),
                Err(CampaignError::Integrity(_))
            ));
        }
        // Dropping a primary record breaks the chain.
        let mut recs = records.clone();
        let pos = recs
            .iter()
            .position(|r| matches!(r.event, Event::AnswerGiven { .. }))
            .unwrap();
        recs.remove(pos);
        assert!(CampaignState::replay(&recs).is_err());
    }

    #[test]
    fn expiry_releases_the_slot() {
        let mut s = settings(1);
        s.claim_timeout_ms = Some(100);
        let mut c = Campaign::create(
            "c",
            s,
            &fixtures::goldfinch(),
            images(1),
            EventLog::in_memory(),
            0,
        )
        .unwrap();
        c.register_annotator("slow", "d", 0).unwrap();
        let t = c.claim_task("slow", 10).unwrap().unwrap();
        let v = c.open_session("slow", &t.task_id, "img1", 20).unwrap();
        assert!(c.expire_stale(50).unwrap().is_empty());
        assert_eq!(
            c.expire_stale(120).unwrap(),
            [("slow".to_string(), t.task_id.clone())]
        );
        assert!(matches!(
            c.answer(&v.session_id, 1, Answer::Yes, 130),
            Err(CampaignError::Conflict(_))
        ));
        assert!(c.claim_task("slow", 130).unwrap().is_none());
        for a in ["b", "c", "d"] {
            c.register_annotator(a, "d", 0).unwrap();
            work_task(&mut c, a, |_| "2").unwrap();
        }
        assert_eq!(c.state().progress().finalized, 1);
        assert!(c
            .state()
            .votes("img1")
            .unwrap()
            .votes
            .iter()
            .all(|v| v.annotator_id != "slow"));
        let replayed = CampaignState::replay(c.log().records()).unwrap();
        assert_eq!(&replayed, c.state());
    }

    #[test]
    fn excluded_images_are_not_annotated() {
        let mut imgs = images(3);
        imgs[1].excluded = true;
        let c = Campaign::create(
            "c",
            settings(5),
            &fixtures::goldfinch(),
            imgs,
            EventLog::in_memory(),
            0,
        )
        .unwrap();
        assert_eq!(c.state().tasks()[0].task.image_ids, ["img1", "img3"]);
        assert_eq!(c.state().progress().images, 2);
    }

    #[test]
    fn alpha_over_counted_votes() {
        let mut c = campaign(3, 3);
        for a in ["a1", "a2", "a3"] {
            c.register_annotator(a, "d", 0).unwrap();
        }
        let labels = ["1-1-1", "2", "3"];
        for a in ["a1", "a2", "a3"] {
            work_task(&mut c, a, |i| labels[i[3..].parse::<usize>().unwrap() - 1]);
        }
        assert_eq!(c.state().alpha(false).unwrap(), 1.0);
        assert_eq!(c.state().session_records().len(), 9);
    }
}
