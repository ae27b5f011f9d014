//! `/v1` HTTP routes. Request and response bodies are JSON with snake_case
//! keys; every error is `{code, message, details}`.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use labrag_core::chat::{
    ChatError, FactorQuestion, FactorSet, LabAssistant, NormalRangeAnswer, Session, SessionFailure, Stage,
    TranscriptEntry, DISCLAIMER,
};
use labrag_core::index::RetrievalHit;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::store::SessionStore;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    assistant: RwLock<Option<Arc<LabAssistant>>>,
    store: SessionStore,
}

impl AppState {
    /// A server with no index yet: health answers 503 until
    /// [`AppState::set_assistant`] is called.
    pub fn new(store: SessionStore) -> Self {
        Self {
            inner: Arc::new(Inner {
                assistant: RwLock::new(None),
                store,
            }),
        }
    }

    pub fn with_assistant(assistant: Arc<LabAssistant>, store: SessionStore) -> Self {
        let state = Self::new(store);
        state.set_assistant(assistant);
        state
    }

    pub fn set_assistant(&self, assistant: Arc<LabAssistant>) {
        *self.inner.assistant.write().expect("state lock poisoned") = Some(assistant);
    }

    pub fn store(&self) -> &SessionStore {
        &self.inner.store
    }

    fn assistant(&self) -> Result<Arc<LabAssistant>, ApiError> {
        self.inner
            .assistant
            .read()
            .expect("state lock poisoned")
            .clone()
            .ok_or_else(not_ready)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/answers", post(submit_answers))
        .with_state(state)
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    code: String,
    message: String,
    details: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, details: Value) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
            details,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

fn not_ready() -> ApiError {
    ApiError::new(
        StatusCode::SERVICE_UNAVAILABLE,
        "index_not_loaded",
        "the index is not loaded yet",
        Value::Null,
    )
}

fn unknown_session(id: &str) -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "unknown_session",
        "no such session, or it has expired",
        json!({ "session_id": id }),
    )
}

fn internal(message: String) -> ApiError {
    ApiError::new(
        StatusCode::INTERNAL_SERVER_ERROR,
        "internal_error",
        message,
        Value::Null,
    )
}

impl From<ChatError> for ApiError {
    fn from(e: ChatError) -> Self {
        let (status, details) = match &e {
            ChatError::EmptyQuery => (StatusCode::BAD_REQUEST, Value::Null),
            ChatError::Retrieval(_) | ChatError::Provider(_) => (StatusCode::BAD_GATEWAY, Value::Null),
            ChatError::NotInCorpus { query } => (StatusCode::NOT_FOUND, json!({ "query": query })),
            ChatError::WrongStage { actual } => (StatusCode::CONFLICT, json!({ "stage": actual })),
            ChatError::IllegalTransition { from, to } => (StatusCode::CONFLICT, json!({ "from": from, "to": to })),
            ChatError::MissingFactor(missing) => (StatusCode::UNPROCESSABLE_ENTITY, json!({ "missing": missing })),
            ChatError::InvalidChoice { factor, value, choices } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "factor": factor, "value": value, "choices": choices }),
            ),
            ChatError::UnknownFactor(name) => (StatusCode::UNPROCESSABLE_ENTITY, json!({ "factor": name })),
            ChatError::UnparseableResponse { .. } | ChatError::NoAnswer => (StatusCode::BAD_GATEWAY, Value::Null),
            ChatError::Config(_) => (StatusCode::INTERNAL_SERVER_ERROR, Value::Null),
        };
        ApiError::new(status, e.code(), e.to_string(), details)
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_body",
            format!("request body: {e}"),
            Value::Null,
        )
    })
}

#[derive(Debug, Deserialize)]
struct NewSession {
    question: String,
}

#[derive(Debug, Deserialize)]
struct Answers {
    answers: BTreeMap<String, String>,
}

/// A final answer as sent to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerView {
    pub text: String,
    pub source_url: String,
    pub factors_applied: BTreeMap<String, String>,
    pub disclaimer: String,
}

impl From<&NormalRangeAnswer> for AnswerView {
    fn from(a: &NormalRangeAnswer) -> Self {
        Self {
            text: a.text.clone(),
            source_url: a.source_url.clone(),
            factors_applied: a.factors_applied.clone(),
            disclaimer: DISCLAIMER.to_string(),
        }
    }
}

/// Body of both POST endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub questions: Vec<FactorQuestion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<AnswerView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<SessionFailure>,
}

impl From<&Session> for SessionSummary {
    fn from(s: &Session) -> Self {
        Self {
            session_id: s.session_id().to_string(),
            stage: s.stage(),
            questions: s.pending_questions().to_vec(),
            answer: s.answer().map(AnswerView::from),
            failure: s.failure().cloned(),
        }
    }
}

/// Body of `GET /v1/sessions/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub stage: Stage,
    pub lab_query: String,
    pub retrieved: Vec<RetrievalHit>,
    pub factors: Option<FactorSet>,
    pub questions: Vec<FactorQuestion>,
    pub collected_answers: BTreeMap<String, String>,
    pub answer: Option<AnswerView>,
    pub failure: Option<SessionFailure>,
    pub transcript: Vec<TranscriptEntry>,
    pub answer_submissions: u32,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl From<&Session> for SessionView {
    fn from(s: &Session) -> Self {
        Self {
            session_id: s.session_id().to_string(),
            stage: s.stage(),
            lab_query: s.lab_query().to_string(),
            retrieved: s.retrieved().to_vec(),
            factors: s.factors().cloned(),
            questions: s.pending_questions().to_vec(),
            collected_answers: s.collected_answers().clone(),
            answer: s.answer().map(AnswerView::from),
            failure: s.failure().cloned(),
            transcript: s.transcript().to_vec(),
            answer_submissions: s.answer_submissions(),
            created_at: s.created_at(),
            updated_at: s.updated_at(),
        }
    }
}

async fn health(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    let assistant = state.assistant()?;
    Ok(Json(json!({
        "status": "ok",
        "index_size": assistant.index().len(),
        "provider_kind": assistant.provider_kind(),
    })))
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Json<SessionSummary>, ApiError> {
    let req: NewSession = parse_body(&body)?;
    let assistant = state.assistant()?;
    let session = tokio::task::spawn_blocking(move || assistant.ask(&req.question))
        .await
        .map_err(|e| internal(format!("session task failed: {e}")))??;
    let summary = SessionSummary::from(&session);
    let not_in_corpus = session.failure().is_some_and(|f| f.code == "not_in_corpus");
    let query = session.lab_query().to_string();
    state.store().insert(session);
    tracing::info!(session_id = %summary.session_id, stage = %summary.stage, "session created");
    if not_in_corpus {
        let mut err = ApiError::from(ChatError::NotInCorpus { query });
        err.details["session_id"] = json!(summary.session_id);
        return Err(err);
    }
    Ok(Json(summary))
}

async fn submit_answers(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionSummary>, ApiError> {
    let req: Answers = parse_body(&body)?;
    let assistant = state.assistant()?;
    let handle = state.store().get(&id).ok_or_else(|| unknown_session(&id))?;
    // Waits for any other request on this session to finish.
    let mut session = handle.lock_owned().await;
    if session.stage() != Stage::AwaitingFactors {
        return Err(ChatError::WrongStage {
            actual: session.stage(),
        }
        .into());
    }
    let (session, result) = tokio::task::spawn_blocking(move || {
        let r = assistant.submit_answers(&mut session, &req.answers);
        (session, r)
    })
    .await
    .map_err(|e| internal(format!("session task failed: {e}")))?;
    state.store().save(&session);
    match result {
        Ok(_) => Ok(Json(SessionSummary::from(&*session))),
        // The session has ended; report it like any other final state.
        Err(_) if session.stage() == Stage::Failed => Ok(Json(SessionSummary::from(&*session))),
        Err(e) => Err(e.into()),
    }
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let handle = state.store().get(&id).ok_or_else(|| unknown_session(&id))?;
    let session = handle.lock().await;
    Ok(Json(SessionView::from(&*session)))
}
