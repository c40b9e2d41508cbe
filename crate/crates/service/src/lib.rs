//! HTTP front end for [`AnnotationService`].
//!
//! Every route lives under `/v1`. Bodies are JSON; errors carry a
//! machine-readable `code` and a human `message`. Annotator routes expect an
//! `Authorization: Bearer <token>` header with the token issued at
//! registration.

use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use visannot_core::assignment::TaskId;
use visannot_core::engine::SessionId;
use visannot_core::service::{AnnotationService, ErrorCode, ServiceError};

pub type SharedService = Arc<Mutex<AnnotationService>>;

pub fn shared(service: AnnotationService) -> SharedService {
    Arc::new(Mutex::new(service))
}

/// A [`ServiceError`] rendered as an HTTP response.
#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

pub fn status_of(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
        ErrorCode::Unauthorized => StatusCode::UNAUTHORIZED,
        ErrorCode::NotFound => StatusCode::NOT_FOUND,
        ErrorCode::Conflict | ErrorCode::StaleSequence => StatusCode::CONFLICT,
        ErrorCode::Precondition => StatusCode::PRECONDITION_FAILED,
        ErrorCode::Integrity | ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (status_of(self.0.code), Json(self.0)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError(ServiceError::new(ErrorCode::BadRequest, message))
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| bad_request(format!("invalid request body: {e}")))
}

fn bearer(headers: &HeaderMap) -> ApiResult<String> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string())
        .ok_or_else(|| {
            ApiError(ServiceError::new(
                ErrorCode::Unauthorized,
                "missing bearer token",
            ))
        })
}

fn lock(svc: &SharedService) -> MutexGuard<'_, AnnotationService> {
    svc.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterRequest {
    annotator_id: String,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    include_unresolved: bool,
}

#[derive(Debug, Serialize)]
struct Expired {
    expired: usize,
}

#[derive(Debug, Serialize)]
struct CampaignList {
    campaigns: Vec<String>,
}

pub fn router(service: SharedService) -> Router {
    Router::new()
        .route("/v1/campaigns", post(create_campaign).get(list_campaigns))
        .route("/v1/campaigns/{cid}/annotators", post(register))
        .route("/v1/campaigns/{cid}/tasks/next", post(next_task))
        .route("/v1/campaigns/{cid}/tasks/{tid}/release", post(release))
        .route(
            "/v1/campaigns/{cid}/tasks/{tid}/completion",
            get(completion),
        )
        .route(
            "/v1/campaigns/{cid}/tasks/{tid}/images/{iid}/session",
            post(open_session),
        )
        .route("/v1/campaigns/{cid}/sessions/{sid}", get(session_view))
        .route("/v1/campaigns/{cid}/sessions/{sid}/answers", post(answer))
        .route("/v1/campaigns/{cid}/progress", get(progress))
        .route("/v1/campaigns/{cid}/metrics", get(metrics))
        .route("/v1/campaigns/{cid}/export", get(export))
        .route("/v1/maintenance/expire", post(expire))
        .with_state(service)
}

async fn create_campaign(State(svc): State<SharedService>, body: Bytes) -> ApiResult<Response> {
    let req = parse_body(&body)?;
    let created = lock(&svc).create_campaign(req)?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn list_campaigns(State(svc): State<SharedService>) -> Json<CampaignList> {
    Json(CampaignList {
        campaigns: lock(&svc).campaign_ids(),
    })
}

async fn register(
    State(svc): State<SharedService>,
    Path(cid): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: RegisterRequest = parse_body(&body)?;
    Ok(Json(lock(&svc).register_annotator(&cid, &req.annotator_id)?).into_response())
}

async fn next_task(
    State(svc): State<SharedService>,
    Path(cid): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let token = bearer(&headers)?;
    Ok(match lock(&svc).next_task(&cid, &token)? {
        Some(task) => Json(task).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn release(
    State(svc): State<SharedService>,
    Path((cid, tid)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<StatusCode> {
    let token = bearer(&headers)?;
    lock(&svc).release(&cid, &token, &TaskId(tid))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn completion(
    State(svc): State<SharedService>,
    Path((cid, tid)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let token = bearer(&headers)?;
    Ok(Json(lock(&svc).completion(&cid, &token, &TaskId(tid))?).into_response())
}

async fn open_session(
    State(svc): State<SharedService>,
    Path((cid, tid, iid)): Path<(String, String, String)>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let token = bearer(&headers)?;
    Ok(Json(lock(&svc).open_session(&cid, &token, &TaskId(tid), &iid)?).into_response())
}

async fn session_view(
    State(svc): State<SharedService>,
    Path((cid, sid)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let token = bearer(&headers)?;
    Ok(Json(lock(&svc).session_view(&cid, &token, &SessionId(sid))?).into_response())
}

async fn answer(
    State(svc): State<SharedService>,
    Path((cid, sid)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let token = bearer(&headers)?;
    let req = parse_body(&body)?;
    Ok(Json(lock(&svc).answer(&cid, &token, &SessionId(sid), req)?).into_response())
}

async fn progress(
    State(svc): State<SharedService>,
    Path(cid): Path<String>,
) -> ApiResult<Response> {
    Ok(Json(lock(&svc).progress(&cid)?).into_response())
}

async fn metrics(State(svc): State<SharedService>, Path(cid): Path<String>) -> ApiResult<Response> {
    Ok(Json(lock(&svc).metrics(&cid)?).into_response())
}

async fn export(
    State(svc): State<SharedService>,
    Path(cid): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    let body = lock(&svc).export(&cid, q.include_unresolved)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn expire(State(svc): State<SharedService>) -> ApiResult<Json<Expired>> {
    let expired = lock(&svc).expire_stale()?;
    Ok(Json(Expired { expired }))
}
