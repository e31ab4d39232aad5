//! HTTP session service over a shared, read-only [`Engine`].
//!
//! All routes live under `/v1`. Each session owns its dialogue state behind
//! an async mutex; a second ask while one is running gets 409 instead of
//! queueing.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex as AsyncMutex;

use convkg_core::context::{topic_entities, RewardError};
use convkg_core::docs::Excerpt;
use convkg_core::kb::{EntitySheet, KbStats};
use convkg_core::{DialogueState, Engine, EngineError, EntityId, Reward, Source, Value};

pub const DEFAULT_TTL: Duration = Duration::from_secs(30 * 60);

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub session_ttl: Duration,
    /// Excerpts returned with each answer.
    pub excerpts_k: usize,
    /// Directory served at `/` (the built web client), if any.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { session_ttl: DEFAULT_TTL, excerpts_k: 3, static_dir: None }
    }
}

struct Session {
    state: Arc<AsyncMutex<DialogueState>>,
    created_at: Instant,
    last_active: Mutex<Instant>,
}

pub struct AppState {
    engine: Arc<Engine>,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    config: ServerConfig,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, config: ServerConfig) -> Arc<AppState> {
        Arc::new(AppState { engine, sessions: Mutex::new(HashMap::new()), config })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Live session lookup. Expired sessions are dropped here, lazily.
    fn session(&self, id: &str) -> Option<Arc<Session>> {
        let mut sessions = self.sessions.lock().unwrap();
        let s = sessions.get(id)?.clone();
        if s.last_active.lock().unwrap().elapsed() > self.config.session_ttl {
            sessions.remove(id);
            log::info!("session {id} expired");
            return None;
        }
        Some(s)
    }

    /// Direct handle on a session's state, e.g. to hold it busy in tests.
    pub fn session_state(&self, id: &str) -> Option<Arc<AsyncMutex<DialogueState>>> {
        self.session(id).map(|s| s.state.clone())
    }

    pub fn session_age(&self, id: &str) -> Option<Duration> {
        self.session(id).map(|s| s.created_at.elapsed())
    }

    pub fn session_count(&self) -> usize {
        let ttl = self.config.session_ttl;
        let mut sessions = self.sessions.lock().unwrap();
        sessions.retain(|_, s| s.last_active.lock().unwrap().elapsed() <= ttl);
        sessions.len()
    }

    fn create_session(&self, speaker_id: Option<&str>) -> Option<String> {
        let id = format!("{:032x}", rand::random::<u128>());
        let state = self.engine.new_session(id.clone(), speaker_id)?;
        let now = Instant::now();
        let session = Session { state: Arc::new(AsyncMutex::new(state)), created_at: now, last_active: Mutex::new(now) };
        self.sessions.lock().unwrap().insert(id.clone(), Arc::new(session));
        Some(id)
    }
}

pub struct ApiError(StatusCode, String);

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError(status, message.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Default, Deserialize)]
pub struct NewSession {
    pub speaker_id: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct AskRequest {
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct RewardRequest {
    pub turn: usize,
    pub reward: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ValueOut {
    /// Entity id or quoted literal.
    pub value: String,
    pub label: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TripleOut {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub text: String,
}

#[derive(Debug, Serialize)]
pub struct AskResponse {
    pub turn: usize,
    pub values: Vec<ValueOut>,
    pub short_text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub long_text: Option<String>,
    pub confidence: f64,
    pub source: Source,
    pub provenance_triples: Vec<TripleOut>,
    pub query_debug: String,
    pub excerpts: Vec<Excerpt>,
    pub entity_sheets: Vec<EntitySheet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clarification: Option<String>,
}

#[derive(Debug, Serialize)]
struct Health {
    status: &'static str,
    kb_stats: KbStats,
    paragraphs: usize,
    sessions: usize,
}

pub fn router(app: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}/ask", post(ask))
        .route("/session/{id}/reward", post(reward))
        .route("/entity/{id}", get(entity))
        .route("/docs", get(docs))
        .route("/health", get(health));
    let router = Router::new().nest("/v1", api);
    let router = match &app.config.static_dir {
        Some(dir) => router.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => router,
    };
    router.with_state(app)
}

async fn create_session(State(app): State<Arc<AppState>>, body: Option<Json<NewSession>>) -> ApiResult<impl IntoResponse> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let id = app
        .create_session(req.speaker_id.as_deref())
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown speaker {:?}", req.speaker_id.unwrap_or_default())))?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

fn unknown_session(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, format!("unknown or expired session {id}"))
}

async fn ask(State(app): State<Arc<AppState>>, Path(id): Path<String>, Json(req): Json<AskRequest>) -> ApiResult<Json<AskResponse>> {
    let session = app.session(&id).ok_or_else(|| unknown_session(&id))?;
    if req.text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "text is empty"));
    }
    let mut guard = session
        .state
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "a previous question on this session is still being answered"))?;
    let worker = app.clone();
    let response = tokio::task::spawn_blocking(move || answer_turn(&worker, &mut guard, &req.text))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    *session.last_active.lock().unwrap() = Instant::now();
    Ok(Json(response))
}

fn answer_turn(app: &AppState, state: &mut DialogueState, text: &str) -> ApiResult<AskResponse> {
    let engine = app.engine();
    let lang = engine.lang.as_str();
    let answer = engine.ask(state, text).map_err(|e| match e {
        EngineError::EmptyUtterance => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        e => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    })?;
    let turn = state.turns.last().expect("ask records a turn");
    let excerpts = engine.excerpts(state, app.config.excerpts_k);

    let mut seen = BTreeSet::new();
    let sheet_ids = topic_entities(&turn.resolved_frame).into_iter().chain(answer.values.iter().filter_map(Value::as_entity).cloned());
    let entity_sheets = sheet_ids.filter(|id| seen.insert(id.clone())).filter_map(|id| engine.kb.entity_sheet(&id, lang).ok()).collect();

    Ok(AskResponse {
        turn: turn.index,
        values: answer.values.iter().map(|v| ValueOut { value: v.to_debug(), label: engine.kb.render(v, lang) }).collect(),
        short_text: answer.short_text.clone(),
        long_text: answer.long_text.clone(),
        confidence: answer.confidence,
        source: answer.source,
        provenance_triples: answer
            .provenance
            .iter()
            .map(|t| TripleOut {
                subject: t.subject.to_string(),
                predicate: t.predicate.to_string(),
                object: t.object.to_debug(),
                text: t.to_debug(),
            })
            .collect(),
        query_debug: answer.query_debug.clone(),
        excerpts,
        entity_sheets,
        clarification: answer.clarification.clone(),
    })
}

async fn reward(State(app): State<Arc<AppState>>, Path(id): Path<String>, Json(req): Json<RewardRequest>) -> ApiResult<impl IntoResponse> {
    let session = app.session(&id).ok_or_else(|| unknown_session(&id))?;
    let reward: Reward = req.reward.parse().map_err(|e: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    let mut state = session
        .state
        .try_lock()
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "a question on this session is still being answered"))?;
    app.engine().record_reward(&mut state, req.turn, reward).map_err(|e| match e {
        EngineError::Reward(RewardError::AlreadySet(_)) => ApiError::new(StatusCode::CONFLICT, e.to_string()),
        EngineError::Reward(RewardError::NotFound(_)) => ApiError::new(StatusCode::NOT_FOUND, e.to_string()),
        e => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    })?;
    *session.last_active.lock().unwrap() = Instant::now();
    Ok(Json(json!({ "ok": true })))
}

async fn entity(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<EntitySheet>> {
    let engine = app.engine();
    EntityId::new(id.as_str())
        .and_then(|id| engine.kb.entity_sheet(&id, &engine.lang))
        .map(Json)
        .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, e.to_string()))
}

#[derive(Debug, Deserialize)]
struct DocsQuery {
    #[serde(default)]
    entities: String,
    k: Option<usize>,
}

async fn docs(State(app): State<Arc<AppState>>, Query(q): Query<DocsQuery>) -> ApiResult<Json<Vec<Excerpt>>> {
    let ids = q
        .entities
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(EntityId::new)
        .collect::<Result<BTreeSet<_>, _>>()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let k = q.k.unwrap_or(app.config.excerpts_k);
    app.engine()
        .docs
        .retrieve(&ids, &BTreeSet::new(), &[], k)
        .map(Json)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}

async fn health(State(app): State<Arc<AppState>>) -> Json<Health> {
    Json(Health { status: "ok", kb_stats: app.engine().kb.stats(), paragraphs: app.engine().docs.len(), sessions: app.session_count() })
}
