//! JSON over HTTP.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use longdial::agent::AgentError;
use longdial::backend::BackendError;
use longdial::generation::{GenerationError, PromptVariant};
use longdial::memory::{time_decay, MemoryError, RetrievalHit, RetrievalResult};
use longdial::persona::PersonaError;
use longdial::{BackendKind, PersonaBank, Timestamp, TopicSet, TurnReport};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::service::{Service, ServiceError};

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/conversations", post(create_conversation))
        .route("/v1/conversations/{id}/messages", post(send_message))
        .route("/v1/conversations/{id}/memory", get(memory))
        .route("/v1/conversations/{id}/personas", get(personas))
        .route("/v1/conversations/{id}/clock", post(advance_clock))
        .with_state(service)
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: String) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code: "invalid_request", message }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

fn backend_cause(e: &AgentError) -> bool {
    matches!(
        e,
        AgentError::Memory(MemoryError::Backend(_) | MemoryError::Embedding(_) | MemoryError::EmptySummary)
            | AgentError::Persona(PersonaError::Backend(_))
            | AgentError::Generation(GenerationError::Backend(_) | GenerationError::EmptyCompletion)
    )
}

fn is_timeout(e: &AgentError) -> bool {
    matches!(
        e,
        AgentError::Memory(MemoryError::Backend(BackendError::Timeout))
            | AgentError::Persona(PersonaError::Backend(BackendError::Timeout))
            | AgentError::Generation(GenerationError::Backend(BackendError::Timeout))
    )
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let (status, code) = match &e {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::AlreadyExists(_) => (StatusCode::CONFLICT, "already_exists"),
            ServiceError::InvalidId(_) => (StatusCode::BAD_REQUEST, "invalid_id"),
            ServiceError::InvalidRequest(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            ServiceError::Agent(AgentError::EmptyInput) => (StatusCode::BAD_REQUEST, "empty_input"),
            ServiceError::Agent(AgentError::NonPositiveDelta(_)) => (StatusCode::BAD_REQUEST, "non_positive_delta"),
            ServiceError::Agent(AgentError::ClockDisabled) => (StatusCode::CONFLICT, "clock_disabled"),
            ServiceError::Agent(a) if is_timeout(a) => (StatusCode::GATEWAY_TIMEOUT, "backend_timeout"),
            ServiceError::Agent(a) if backend_cause(a) => (StatusCode::BAD_GATEWAY, "backend_error"),
            ServiceError::Agent(_) => (StatusCode::INTERNAL_SERVER_ERROR, "agent_error"),
            ServiceError::Persistence(_) => (StatusCode::INTERNAL_SERVER_ERROR, "persistence_error"),
            ServiceError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal_error"),
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        Self { status, code, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub backend: BackendKind,
    pub simulated_clock: bool,
    pub conversations_loaded: usize,
}

async fn health(State(service): State<Arc<Service>>) -> Json<Health> {
    let cfg = service.config();
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        backend: cfg.backend.kind,
        simulated_clock: cfg.simulated_clock,
        conversations_loaded: service.loaded(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateRequest {
    pub user_name: String,
    pub agent_name: String,
    #[serde(default)]
    pub conversation_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub conversation_id: String,
    pub user_name: String,
    pub agent_name: String,
    pub now: Timestamp,
}

async fn create_conversation(
    State(service): State<Arc<Service>>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let Json(req) = body?;
    let view = service.create(&req.user_name, &req.agent_name, req.conversation_id.as_deref())?;
    let s = &view.snapshot;
    let created = Created {
        conversation_id: s.conversation_id.clone(),
        user_name: s.user_name.clone(),
        agent_name: s.agent_name.clone(),
        now: view.now(),
    };
    Ok((StatusCode::CREATED, Json(created)))
}

/// One retrieved memory with its score components.
#[derive(Debug, Serialize, Deserialize)]
pub struct HitView {
    pub record_id: String,
    pub timestamp: Timestamp,
    pub date: String,
    pub summary: String,
    pub s_sem: f64,
    pub s_top: f64,
    pub lambda_t: f64,
    pub s_overall: f64,
}

impl From<&RetrievalHit> for HitView {
    fn from(h: &RetrievalHit) -> Self {
        Self {
            record_id: h.record.record_id.clone(),
            timestamp: h.record.timestamp,
            date: h.record.timestamp.iso_date(),
            summary: h.record.summary.clone(),
            s_sem: h.scores.s_sem,
            s_top: h.scores.s_top,
            lambda_t: h.scores.lambda_t,
            s_overall: h.scores.s_overall,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RetrievalView {
    /// True when nothing cleared the threshold and the prompt said so.
    pub sentinel: bool,
    pub hits: Vec<HitView>,
}

impl From<&RetrievalResult> for RetrievalView {
    fn from(r: &RetrievalResult) -> Self {
        Self { sentinel: r.sentinel, hits: r.hits.iter().map(HitView::from).collect() }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: Vec<String>,
    pub variant: PromptVariant,
    pub boundary_fired: bool,
    pub session_index: u32,
    /// Record written when the user's message closed the previous session.
    pub new_record: Option<String>,
    pub retrieval: RetrievalView,
    pub persona_delta: PersonaDeltaView,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PersonaDeltaView {
    pub user: Vec<String>,
    pub agent: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MessageRequest {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MessageResponse {
    pub conversation_id: String,
    pub response: String,
    pub now: Timestamp,
    pub diagnostics: Diagnostics,
}

impl MessageResponse {
    pub fn from_report(conversation_id: &str, report: &TurnReport) -> Self {
        Self {
            conversation_id: conversation_id.into(),
            response: report.response.clone(),
            now: report.now,
            diagnostics: Diagnostics {
                steps: report.steps.clone(),
                variant: report.variant,
                boundary_fired: report.boundary_fired,
                session_index: report.agent_observation.session_index,
                new_record: report.user_observation.new_record.clone(),
                retrieval: RetrievalView::from(&report.retrieval),
                persona_delta: PersonaDeltaView {
                    user: report.persona_delta.user.clone(),
                    agent: report.persona_delta.agent.clone(),
                },
            },
        }
    }
}

async fn send_message(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Result<Json<MessageRequest>, JsonRejection>,
) -> ApiResult<MessageResponse> {
    let Json(req) = body?;
    let report = service.send_message(&id, &req.text).await?;
    Ok(Json(MessageResponse::from_report(&id, &report)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecordView {
    pub record_id: String,
    pub timestamp: Timestamp,
    pub date: String,
    pub summary: String,
    pub topics: TopicSet,
    pub source_session: u32,
    /// Time-decay weight the record would get at the conversation's now.
    pub lambda_now: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MemoryResponse {
    pub conversation_id: String,
    pub now: Timestamp,
    pub session_index: u32,
    pub cached_utterances: usize,
    pub records: Vec<RecordView>,
    pub last_retrieval: Option<RetrievalView>,
}

async fn memory(State(service): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<MemoryResponse> {
    let view = service.view(&id)?;
    let now = view.now();
    let s = &view.snapshot;
    let tau = service.config().retrieval.tau_hours;
    let records = s
        .bank
        .records()
        .iter()
        .map(|r| RecordView {
            record_id: r.record_id.clone(),
            timestamp: r.timestamp,
            date: r.timestamp.iso_date(),
            summary: r.summary.clone(),
            topics: r.topics.clone(),
            source_session: r.source_session,
            lambda_now: time_decay(now.seconds_since(r.timestamp).max(0) as f64 / 3600.0, tau),
        })
        .collect();
    Ok(Json(MemoryResponse {
        conversation_id: s.conversation_id.clone(),
        now,
        session_index: s.cache.session_index(),
        cached_utterances: s.cache.len(),
        records,
        last_retrieval: view.last_retrieval.as_ref().map(RetrievalView::from),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PersonasResponse {
    pub conversation_id: String,
    pub user: PersonaBank,
    pub agent: PersonaBank,
}

async fn personas(State(service): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<PersonasResponse> {
    let view = service.view(&id)?;
    let p = &view.snapshot.personas;
    Ok(Json(PersonasResponse {
        conversation_id: view.snapshot.conversation_id.clone(),
        user: p.user.clone(),
        agent: p.agent.clone(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClockRequest {
    pub delta_seconds: i64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClockResponse {
    pub conversation_id: String,
    pub now: Timestamp,
}

async fn advance_clock(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Result<Json<ClockRequest>, JsonRejection>,
) -> ApiResult<ClockResponse> {
    let Json(req) = body?;
    let now = service.advance_clock(&id, req.delta_seconds).await?;
    Ok(Json(ClockResponse { conversation_id: id, now }))
}
