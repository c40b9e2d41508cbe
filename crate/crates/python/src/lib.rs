//! Python bindings.
//!
//! Structured values cross the boundary as plain Python dicts and lists with
//! the same shape as the JSON documents used by the HTTP service.

use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::de::DeserializeOwned;
use serde::Serialize;
use visannot_core::assignment::{aggregate, ConsensusPolicy, Vote, VoteSet};
use visannot_core::engine::{question_upper_bound, start_session, AnnotationSession, SessionId};
use visannot_core::reliability::{krippendorff_alpha_nominal, ReliabilityData};
use visannot_core::service::{AnnotationService, ServiceError};
use visannot_core::simulation::{run_method_comparison, SimConfig};
use visannot_core::storage::{export_dataset, replay_state, EventLog, ExportOptions};
use visannot_core::{Answer, LabelOutcome, OutcomeKind, Protocol};

create_exception!(visannot, VisannotError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    VisannotError::new_err(e.to_string())
}

fn service_err(e: ServiceError) -> PyErr {
    let code = serde_json::to_value(e.code)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    VisannotError::new_err((code, e.message))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = PyModule::import(obj.py(), "json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn protocol(letter: &str) -> PyResult<Protocol> {
    letter
        .parse()
        .map_err(|e| PyValueError::new_err(format!("{e}")))
}

/// A validated category hierarchy.
#[pyclass(frozen, module = "visannot")]
struct Hierarchy {
    inner: Arc<visannot_core::Hierarchy>,
}

#[pymethods]
impl Hierarchy {
    /// Parses and validates a hierarchy document given as JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = visannot_core::Hierarchy::parse(text).map_err(err)?;
        Ok(Hierarchy {
            inner: Arc::new(inner),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn ids(&self) -> Vec<String> {
        self.inner.ids().iter().map(ToString::to_string).collect()
    }

    fn leaves(&self) -> Vec<String> {
        self.inner
            .leaves()
            .iter()
            .map(|n| n.id.to_string())
            .collect()
    }

    fn question_upper_bound(&self) -> u32 {
        question_upper_bound(&self.inner)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Opens an interactive labelling session for one image.
    #[pyo3(signature = (image_id, protocol = "C"))]
    fn start(&self, image_id: &str, protocol: &str) -> PyResult<Session> {
        let (inner, _) = start_session(
            SessionId("local".into()),
            self.inner.clone(),
            image_id,
            self::protocol(protocol)?,
        )
        .map_err(err)?;
        Ok(Session { inner })
    }
}

/// One image walked through the question engine.
#[pyclass(module = "visannot")]
struct Session {
    inner: AnnotationSession,
}

#[pymethods]
impl Session {
    /// The pending question as a dict, or None once finished.
    fn question<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.pending_question())
    }

    /// Submits an answer: True/False for yes/no questions, a concept id for
    /// a flat choice, or None for "none of these".
    fn answer<'py>(
        &mut self,
        py: Python<'py>,
        answer: &Bound<'py, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let a = if answer.is_none() {
            Answer::NoneOfThese
        } else if let Ok(b) = answer.extract::<bool>() {
            if b {
                Answer::Yes
            } else {
                Answer::No
            }
        } else {
            let id: String = answer.extract()?;
            Answer::Choice(
                id.parse()
                    .map_err(|e| PyValueError::new_err(format!("{e}")))?,
            )
        };
        let step = self.inner.submit_answer(a).map_err(err)?;
        to_py(py, &step)
    }

    fn is_finished(&self) -> bool {
        self.inner.is_finished()
    }

    fn outcome<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.outcome())
    }
}

/// Nominal Krippendorff's alpha over a units x observers matrix; None marks
/// a missing value.
#[pyfunction]
fn krippendorff_alpha(rows: Vec<Vec<Option<String>>>) -> PyResult<f64> {
    krippendorff_alpha_nominal(&ReliabilityData::from_matrix(&rows)).map_err(err)
}

/// Consensus over one image's votes, each a concept id or "Discharged".
#[pyfunction]
#[pyo3(signature = (labels, replication = 3, max_replication = 5))]
fn consensus<'py>(
    py: Python<'py>,
    labels: Vec<String>,
    replication: usize,
    max_replication: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let votes = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let outcome = if l == "Discharged" {
                LabelOutcome {
                    kind: OutcomeKind::Discharged,
                    label: None,
                    path: vec![],
                    question_count: 0,
                }
            } else {
                LabelOutcome {
                    kind: OutcomeKind::Classified,
                    label: Some(
                        l.parse()
                            .map_err(|e| PyValueError::new_err(format!("{e}")))?,
                    ),
                    path: vec![],
                    question_count: 0,
                }
            };
            Ok(Vote {
                annotator_id: format!("v{i}"),
                outcome,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let policy = ConsensusPolicy {
        target_replication: replication,
        max_replication,
    };
    let result = aggregate(
        &VoteSet {
            image_id: "image".into(),
            votes,
        },
        policy,
    )
    .map_err(err)?;
    to_py(py, &result)
}

/// Runs a method comparison from a config file and returns its CSV table.
#[pyfunction]
#[pyo3(signature = (config_path, seed = None))]
fn simulate(py: Python<'_>, config_path: &str, seed: Option<u64>) -> PyResult<(String, String)> {
    let (mut cfg, h) = SimConfig::load(config_path).map_err(err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = py.detach(|| run_method_comparison(&cfg, &h)).map_err(err)?;
    Ok((report.to_csv(), report.cost_csv()))
}

/// Exports the labelled dataset recorded in a campaign event log.
#[pyfunction]
#[pyo3(signature = (log_text, include_unresolved = false))]
fn export_log<'py>(
    py: Python<'py>,
    log_text: &str,
    include_unresolved: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let records = EventLog::parse(log_text).map_err(err)?;
    let state = replay_state(&records).map_err(err)?;
    let rows = export_dataset(&state, ExportOptions { include_unresolved }).map_err(err)?;
    to_py(py, &rows)
}

/// The campaign service used by the HTTP front end, in process.
///
/// Errors raise `VisannotError(code, message)`.
#[pyclass(module = "visannot")]
struct Service {
    inner: AnnotationService,
}

#[pymethods]
impl Service {
    /// In memory when `data_dir` is None, else persisted and replayed there.
    #[new]
    #[pyo3(signature = (data_dir = None))]
    fn new(data_dir: Option<&str>) -> PyResult<Self> {
        let inner = match data_dir {
            Some(d) => AnnotationService::open(d).map_err(service_err)?,
            None => AnnotationService::in_memory(),
        };
        Ok(Service { inner })
    }

    fn campaign_ids(&self) -> Vec<String> {
        self.inner.campaign_ids()
    }

    fn create_campaign<'py>(
        &mut self,
        py: Python<'py>,
        request: &Bound<'py, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let created = self
            .inner
            .create_campaign(from_py(request)?)
            .map_err(service_err)?;
        to_py(py, &created)
    }

    fn register_annotator<'py>(
        &mut self,
        py: Python<'py>,
        campaign_id: &str,
        annotator_id: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let reg = self
            .inner
            .register_annotator(campaign_id, annotator_id)
            .map_err(service_err)?;
        to_py(py, &reg)
    }

    fn next_task<'py>(
        &mut self,
        py: Python<'py>,
        campaign_id: &str,
        token: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let task = self
            .inner
            .next_task(campaign_id, token)
            .map_err(service_err)?;
        to_py(py, &task)
    }

    fn open_session<'py>(
        &mut self,
        py: Python<'py>,
        campaign_id: &str,
        token: &str,
        task_id: &str,
        image_id: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let view = self
            .inner
            .open_session(campaign_id, token, &task_id_of(task_id), image_id)
            .map_err(service_err)?;
        to_py(py, &view)
    }

    /// `answer` uses the wire shape, e.g. {"value": "yes"}.
    fn answer<'py>(
        &mut self,
        py: Python<'py>,
        campaign_id: &str,
        token: &str,
        session_id: &str,
        sequence_no: u32,
        answer: &Bound<'py, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let req = visannot_core::service::AnswerRequest {
            sequence_no,
            answer: from_py(answer)?,
        };
        let step = self
            .inner
            .answer(campaign_id, token, &SessionId(session_id.into()), req)
            .map_err(service_err)?;
        to_py(py, &step)
    }

    fn release(&mut self, campaign_id: &str, token: &str, task_id: &str) -> PyResult<()> {
        self.inner
            .release(campaign_id, token, &task_id_of(task_id))
            .map_err(service_err)
    }

    fn completion<'py>(
        &self,
        py: Python<'py>,
        campaign_id: &str,
        token: &str,
        task_id: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let c = self
            .inner
            .completion(campaign_id, token, &task_id_of(task_id))
            .map_err(service_err)?;
        to_py(py, &c)
    }

    fn progress<'py>(&self, py: Python<'py>, campaign_id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.progress(campaign_id).map_err(service_err)?)
    }

    fn metrics<'py>(&self, py: Python<'py>, campaign_id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.metrics(campaign_id).map_err(service_err)?)
    }

    /// The export as newline-delimited JSON text.
    #[pyo3(signature = (campaign_id, include_unresolved = false))]
    fn export(&self, campaign_id: &str, include_unresolved: bool) -> PyResult<String> {
        self.inner
            .export(campaign_id, include_unresolved)
            .map_err(service_err)
    }
}

fn task_id_of(id: &str) -> visannot_core::assignment::TaskId {
    visannot_core::assignment::TaskId(id.into())
}

#[pymodule]
fn visannot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VisannotError", m.py().get_type::<VisannotError>())?;
    m.add_class::<Hierarchy>()?;
    m.add_class::<Session>()?;
    m.add_class::<Service>()?;
    m.add_function(wrap_pyfunction!(krippendorff_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(consensus, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(export_log, m)?)?;
    Ok(())
}
