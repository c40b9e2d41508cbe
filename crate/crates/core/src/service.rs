//! Transport-independent request handling.
//!
//! [`AnnotationService`] owns every campaign, authenticates annotators by
//! token and turns each accepted request into one primary log event. With a
//! data directory, each campaign is persisted to `<campaign_id>.ndjson` and
//! replayed when the service is reopened.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assignment::TaskId;
use crate::campaign::{
    Campaign, CampaignError, CampaignSettings, ClaimStatus, Progress, SessionView,
};
use crate::engine::{Answer, EngineError, Protocol, SessionId, Step};
use crate::hierarchy::Hierarchy;
use crate::reliability::{
    category_count_table, cost_report, CostReport, CountTable, RateModel, ReliabilityError,
};
use crate::simulation::HierarchySource;
use crate::storage::{
    export_dataset, export_to_ndjson, ingest_manifest, EventLog, ExportError, ExportOptions,
    IngestError,
};

/// Environment variable naming the service data directory.
pub const DATA_DIR_ENV: &str = "VISANNOT_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    Unauthorized,
    NotFound,
    Conflict,
    StaleSequence,
    Precondition,
    Integrity,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ServiceError {
    pub code: ErrorCode,
    pub message: String,
}

impl ServiceError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ServiceError {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for ServiceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

impl std::error::Error for ServiceError {}

impl From<CampaignError> for ServiceError {
    fn from(e: CampaignError) -> Self {
        let code = match &e {
            CampaignError::Engine(EngineError::Finished) => ErrorCode::Conflict,
            CampaignError::Config(_)
            | CampaignError::Hierarchy(_)
            | CampaignError::Validation(_)
            | CampaignError::Engine(_) => ErrorCode::BadRequest,
            CampaignError::NotFound(_) => ErrorCode::NotFound,
            CampaignError::Conflict(_) => ErrorCode::Conflict,
            CampaignError::StaleSequence { .. } => ErrorCode::StaleSequence,
            CampaignError::Integrity(_) => ErrorCode::Integrity,
            CampaignError::Log(_) | CampaignError::Poisoned => ErrorCode::Internal,
        };
        ServiceError::new(code, e.to_string())
    }
}

impl From<IngestError> for ServiceError {
    fn from(e: IngestError) -> Self {
        ServiceError::new(ErrorCode::BadRequest, e.to_string())
    }
}

impl From<ExportError> for ServiceError {
    fn from(e: ExportError) -> Self {
        let code = match e {
            ExportError::NothingFinal => ErrorCode::Precondition,
            ExportError::Integrity(_) => ErrorCode::Integrity,
            ExportError::Malformed { .. } => ErrorCode::BadRequest,
        };
        ServiceError::new(code, e.to_string())
    }
}

impl From<ReliabilityError> for ServiceError {
    fn from(e: ReliabilityError) -> Self {
        ServiceError::new(ErrorCode::Integrity, e.to_string())
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateCampaignRequest {
    /// Inline document or a path readable by the service.
    pub hierarchy: HierarchySource,
    /// Manifest entries, one object per image.
    #[serde(default)]
    pub images: Vec<serde_json::Value>,
    /// Manifest file path, read before the inline entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub settings: CampaignSettings,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CampaignCreated {
    pub campaign_id: String,
    pub images: usize,
    pub tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Registration {
    pub annotator_id: String,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskImage {
    pub image_id: String,
    pub uri: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskView {
    pub task_id: TaskId,
    pub protocol: Protocol,
    pub images: Vec<TaskImage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub sequence_no: u32,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Agreement over exact labels, when defined.
    pub alpha: Option<f64>,
    /// Agreement with every upper-level label folded into one value.
    pub alpha_collapsed: Option<f64>,
    /// Why alpha is unavailable, if it is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_note: Option<String>,
    pub counts: CountTable,
    pub cost: CostReport,
}

/// Proof of a completed task for an external crowd platform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Completion {
    pub annotator_id: String,
    pub task_id: TaskId,
    pub completion_code: String,
}

/// Hex SHA-256 of `text`.
pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn annotator_token(secret: &str, annotator_id: &str) -> String {
    sha256_hex(&format!("{secret}:{annotator_id}"))
}

fn system_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

type Clock = Box<dyn Fn() -> u64 + Send + Sync>;

pub struct AnnotationService {
    campaigns: BTreeMap<String, Campaign>,
    data_dir: Option<PathBuf>,
    counter: u64,
    clock: Clock,
    rates: RateModel,
}

impl fmt::Debug for AnnotationService {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnnotationService")
            .field("campaigns", &self.campaigns.keys().collect::<Vec<_>>())
            .field("data_dir", &self.data_dir)
            .finish()
    }
}

impl Default for AnnotationService {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl AnnotationService {
    pub fn in_memory() -> Self {
        AnnotationService {
            campaigns: BTreeMap::new(),
            data_dir: None,
            counter: 0,
            clock: Box::new(system_millis),
            rates: RateModel::default(),
        }
    }

    /// Opens a service persisted under `dir`, replaying every campaign log.
    pub fn open(dir: impl AsRef<Path>) -> ServiceResult<Self> {
        let dir = dir.as_ref().to_path_buf();
        let internal = |e: std::io::Error| ServiceError::new(ErrorCode::Internal, e.to_string());
        std::fs::create_dir_all(&dir).map_err(internal)?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(internal)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        paths.sort();
        let mut svc = Self::in_memory();
        for p in paths {
            let log = EventLog::open(&p).map_err(CampaignError::from)?;
            let campaign = Campaign::resume(log)?;
            let id = campaign.state().id().to_string();
            if let Some(n) = id.strip_prefix('c').and_then(|n| n.parse::<u64>().ok()) {
                svc.counter = svc.counter.max(n);
            }
            svc.campaigns.insert(id, campaign);
        }
        svc.data_dir = Some(dir);
        Ok(svc)
    }

    /// Opens the directory named by the data-dir environment variable, or an
    /// in-memory service when it is unset.
    pub fn from_env() -> ServiceResult<Self> {
        match std::env::var_os(DATA_DIR_ENV) {
            Some(d) => Self::open(d),
            None => Ok(Self::in_memory()),
        }
    }

    /// Replaces the wall clock, e.g. with logical ticks.
    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn with_rates(mut self, rates: RateModel) -> Self {
        self.rates = rates;
        self
    }

    pub fn campaign_ids(&self) -> Vec<String> {
        self.campaigns.keys().cloned().collect()
    }

    pub fn campaign(&self, campaign_id: &str) -> ServiceResult<&Campaign> {
        self.campaigns.get(campaign_id).ok_or_else(|| {
            ServiceError::new(ErrorCode::NotFound, format!("campaign {campaign_id}"))
        })
    }

    fn campaign_mut(&mut self, campaign_id: &str) -> ServiceResult<&mut Campaign> {
        self.campaigns.get_mut(campaign_id).ok_or_else(|| {
            ServiceError::new(ErrorCode::NotFound, format!("campaign {campaign_id}"))
        })
    }

    pub fn create_campaign(
        &mut self,
        req: CreateCampaignRequest,
    ) -> ServiceResult<CampaignCreated> {
        let read = |path: &str| {
            std::fs::read_to_string(path).map_err(|e| {
                ServiceError::new(ErrorCode::BadRequest, format!("cannot read {path}: {e}"))
            })
        };
        let hierarchy = match &req.hierarchy {
            HierarchySource::Inline(doc) => Hierarchy::from_document(doc),
            HierarchySource::Path(path) => Hierarchy::parse(&read(path)?),
        }
        .map_err(CampaignError::from)?;
        let mut manifest = match &req.manifest {
            Some(path) => read(path)?,
            None => String::new(),
        };
        if !manifest.is_empty() && !manifest.ends_with('\n') {
            manifest.push('\n');
        }
        for v in &req.images {
            manifest.push_str(&(v.to_string() + "\n"));
        }
        let images = ingest_manifest(&manifest)?;
        let mut settings = req.settings;
        settings.validate()?;
        if settings.token_secret.is_none() {
            settings.token_secret = Some(sha256_hex(&format!("{:?}", rand::random::<[u8; 32]>())));
        }
        let campaign_id = format!("c{:04}", self.counter + 1);
        let log = match &self.data_dir {
            Some(dir) => {
                let path = dir.join(format!("{campaign_id}.ndjson"));
                if path.exists() {
                    return Err(ServiceError::new(
                        ErrorCode::Conflict,
                        format!("log for {campaign_id} already exists"),
                    ));
                }
                EventLog::open(path).map_err(CampaignError::from)?
            }
            None => EventLog::in_memory(),
        };
        let now = (self.clock)();
        let campaign =
            Campaign::create(campaign_id.clone(), settings, &hierarchy, images, log, now)?;
        self.counter += 1;
        let created = CampaignCreated {
            campaign_id: campaign_id.clone(),
            images: campaign.state().progress().images,
            tasks: campaign.state().tasks().len(),
        };
        self.campaigns.insert(campaign_id, campaign);
        Ok(created)
    }

    /// Registers an annotator. Registering the same id again returns the same
    /// token without logging anything.
    pub fn register_annotator(
        &mut self,
        campaign_id: &str,
        annotator_id: &str,
    ) -> ServiceResult<Registration> {
        let now = (self.clock)();
        let c = self.campaign_mut(campaign_id)?;
        let secret = c
            .state()
            .settings()
            .token_secret
            .clone()
            .unwrap_or_default();
        let token = annotator_token(&secret, annotator_id);
        let digest = sha256_hex(&token);
        match c.state().annotator(annotator_id) {
            Ok(a) if a.token_digest == digest => {}
            Ok(_) => {
                return Err(ServiceError::new(
                    ErrorCode::Conflict,
                    format!("annotator {annotator_id} is registered with another token"),
                ))
            }
            Err(_) => c.register_annotator(annotator_id, &digest, now)?,
        }
        Ok(Registration {
            annotator_id: annotator_id.to_string(),
            token,
        })
    }

    fn authenticate(&self, campaign_id: &str, token: &str) -> ServiceResult<String> {
        let c = self.campaign(campaign_id)?;
        let digest = sha256_hex(token);
        c.state()
            .annotator_ids()
            .iter()
            .find(|a| {
                c.state()
                    .annotator(a)
                    .is_ok_and(|s| s.token_digest == digest)
            })
            .cloned()
            .ok_or_else(|| ServiceError::new(ErrorCode::Unauthorized, "unknown annotator token"))
    }

    /// The annotator's current task, claiming a new one if needed.
    pub fn next_task(&mut self, campaign_id: &str, token: &str) -> ServiceResult<Option<TaskView>> {
        let annotator = self.authenticate(campaign_id, token)?;
        let now = (self.clock)();
        let c = self.campaign_mut(campaign_id)?;
        let Some(task) = c.claim_task(&annotator, now)? else {
            return Ok(None);
        };
        let images = task
            .image_ids
            .iter()
            .map(|id| TaskImage {
                image_id: id.clone(),
                uri: c
                    .state()
                    .image(id)
                    .map(|r| r.uri.clone())
                    .unwrap_or_default(),
            })
            .collect();
        Ok(Some(TaskView {
            task_id: task.task_id,
            protocol: task.protocol,
            images,
        }))
    }

    pub fn open_session(
        &mut self,
        campaign_id: &str,
        token: &str,
        task_id: &TaskId,
        image_id: &str,
    ) -> ServiceResult<SessionView> {
        let annotator = self.authenticate(campaign_id, token)?;
        let now = (self.clock)();
        let c = self.campaign_mut(campaign_id)?;
        Ok(c.open_session(&annotator, task_id, image_id, now)?)
    }

    pub fn session_view(
        &self,
        campaign_id: &str,
        token: &str,
        session_id: &SessionId,
    ) -> ServiceResult<SessionView> {
        let annotator = self.authenticate(campaign_id, token)?;
        let entry = self.campaign(campaign_id)?.state().session(session_id)?;
        if entry.annotator_id != annotator {
            return Err(ServiceError::new(
                ErrorCode::Unauthorized,
                format!("session {session_id} belongs to another annotator"),
            ));
        }
        Ok(SessionView {
            session_id: session_id.clone(),
            image_id: entry.session.image_id().to_string(),
            question: entry.session.pending_question().cloned(),
            outcome: entry.session.outcome().cloned(),
        })
    }

    pub fn answer(
        &mut self,
        campaign_id: &str,
        token: &str,
        session_id: &SessionId,
        req: AnswerRequest,
    ) -> ServiceResult<Step> {
        self.session_view(campaign_id, token, session_id)?;
        let now = (self.clock)();
        let c = self.campaign_mut(campaign_id)?;
        Ok(c.answer(session_id, req.sequence_no, req.answer, now)?)
    }

    pub fn release(
        &mut self,
        campaign_id: &str,
        token: &str,
        task_id: &TaskId,
    ) -> ServiceResult<()> {
        let annotator = self.authenticate(campaign_id, token)?;
        let now = (self.clock)();
        Ok(self
            .campaign_mut(campaign_id)?
            .release(&annotator, task_id, now)?)
    }

    /// The completion code of a task the caller has finished.
    pub fn completion(
        &self,
        campaign_id: &str,
        token: &str,
        task_id: &TaskId,
    ) -> ServiceResult<Completion> {
        let annotator = self.authenticate(campaign_id, token)?;
        let state = self.campaign(campaign_id)?.state();
        match state.claim(&annotator, task_id) {
            Some(c) if c.status == ClaimStatus::Completed => {}
            Some(_) => {
                return Err(ServiceError::new(
                    ErrorCode::Precondition,
                    format!("task {task_id} is not completed"),
                ))
            }
            None => {
                return Err(ServiceError::new(
                    ErrorCode::NotFound,
                    format!("no claim on task {task_id}"),
                ))
            }
        }
        let secret = state.settings().token_secret.clone().unwrap_or_default();
        let code = sha256_hex(&format!("{secret}:{annotator}:{task_id}"));
        Ok(Completion {
            annotator_id: annotator,
            task_id: task_id.clone(),
            completion_code: code[..16].to_uppercase(),
        })
    }

    /// Expires idle claims in every campaign.
    pub fn expire_stale(&mut self) -> ServiceResult<usize> {
        let now = (self.clock)();
        let mut n = 0;
        for c in self.campaigns.values_mut() {
            n += c.expire_stale(now)?.len();
        }
        Ok(n)
    }

    pub fn progress(&self, campaign_id: &str) -> ServiceResult<Progress> {
        Ok(self.campaign(campaign_id)?.state().progress())
    }

    pub fn metrics(&self, campaign_id: &str) -> ServiceResult<MetricsReport> {
        let state = self.campaign(campaign_id)?.state();
        let h = state.hierarchy();
        let leaves: Vec<_> = h.leaves().into_iter().map(|l| l.id.clone()).collect();
        let counts = category_count_table(&state.final_results(), h, &leaves)?;
        let (alpha, alpha_note) = match state.alpha(false) {
            Ok(a) => (Some(a), None),
            Err(e) => (None, Some(format!("alpha unavailable: {e}"))),
        };
        let alpha_collapsed = state.alpha(true).ok();
        let mut cost = cost_report(&state.session_records(), &self.rates)?;
        cost.set_alpha(state.protocol(), state.settings().task_size, alpha);
        Ok(MetricsReport {
            alpha,
            alpha_collapsed,
            alpha_note,
            counts,
            cost,
        })
    }

    pub fn export(&self, campaign_id: &str, include_unresolved: bool) -> ServiceResult<String> {
        let rows = export_dataset(
            self.campaign(campaign_id)?.state(),
            ExportOptions { include_unresolved },
        )?;
        Ok(export_to_ndjson(&rows))
    }
}
