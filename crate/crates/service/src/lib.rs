//! HTTP API over the inner-dialogue engine with per-session persistence.
//!
//! Agent steps run eagerly in a background driver until the session needs comfort
//! from the player. Every accepted step is persisted before it becomes visible.

pub mod events;
pub mod store;

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex as StdMutex, RwLock};
use std::time::Duration;

use async_trait::async_trait;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use mind_core::domain::DomainError;
use mind_core::backend::{Backend, BackendError, ChatRequest, ChatResponse};
use mind_core::session::{classify_failure, FieldKind, Phase, RoundRecord};
use mind_core::transcript::TranscriptFooter;
use mind_core::{
    create_session, AgentConfig, AgentSuite, Comfort, Engine, PersonalityProfile, PhaseInput, SessionError,
    SessionId, SessionOptions, SessionState, SessionStatus, StepResult, TemplateSet, Theme,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{watch, Mutex, Semaphore};
use tower_http::services::ServeDir;
use tracing::{info, warn};

pub use events::{derive_events, EventKind, SessionEvent};
pub use store::{SessionStore, StoreError};

/// Creates the backend a new or reloaded session talks to.
pub type BackendFactory = Arc<dyn Fn() -> Result<Arc<dyn Backend>, BackendError> + Send + Sync>;

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Global cap on concurrent backend requests.
    pub max_in_flight: usize,
    /// Directory served at `/` for the browser UI, if any.
    pub static_dir: Option<PathBuf>,
    pub agent: AgentConfig,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig { data_dir: data_dir.into(), max_in_flight: DEFAULT_MAX_IN_FLIGHT, static_dir: None, agent: AgentConfig::default() }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Backend wrapper holding a permit of the global in-flight semaphore per request.
struct Limited {
    inner: Arc<dyn Backend>,
    permits: Arc<Semaphore>,
}

#[async_trait]
impl Backend for Limited {
    async fn complete(&self, request: ChatRequest) -> Result<ChatResponse, BackendError> {
        let _permit = self.permits.acquire().await.expect("semaphore is never closed");
        self.inner.complete(request).await
    }

    fn model(&self) -> &str {
        self.inner.model()
    }
}

struct Slot {
    /// Held for the whole of any mutation, including backend calls.
    state: Mutex<SessionState>,
    /// Latest persisted state, readable while a mutation is running.
    snapshot: RwLock<SessionState>,
    version: watch::Sender<u64>,
    engine: Option<Engine>,
    model: String,
    last_error: StdMutex<Option<String>>,
}

impl Slot {
    fn snapshot(&self) -> SessionState {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }
}

struct Inner {
    config: ServiceConfig,
    store: SessionStore,
    templates: Arc<TemplateSet>,
    backend_factory: Option<BackendFactory>,
    permits: Arc<Semaphore>,
    sessions: RwLock<HashMap<SessionId, Arc<Slot>>>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Opens the data directory and reloads every persisted session. `backend` is
    /// `None` when no provider is configured; creating sessions then answers 503.
    pub fn new(config: ServiceConfig, templates: Arc<TemplateSet>, backend: Option<BackendFactory>) -> Result<Self, ServiceError> {
        if config.max_in_flight == 0 {
            return Err(ServiceError::Config("max_in_flight must be at least 1".into()));
        }
        let store = SessionStore::open(&config.data_dir)?;
        let permits = Arc::new(Semaphore::new(config.max_in_flight));
        let inner = Arc::new(Inner {
            config,
            store,
            templates,
            backend_factory: backend,
            permits,
            sessions: RwLock::new(HashMap::new()),
        });
        let app = AppState { inner };
        for state in app.inner.store.load_all()? {
            let slot = app.make_slot(state)?;
            let id = slot.snapshot().id.clone();
            app.inner.sessions.write().expect("sessions lock poisoned").insert(id, slot);
        }
        Ok(app)
    }

    fn make_slot(&self, state: SessionState) -> Result<Arc<Slot>, ServiceError> {
        let (engine, model) = match &self.inner.backend_factory {
            Some(factory) => {
                let backend = factory().map_err(|e| ServiceError::Config(e.to_string()))?;
                let model = backend.model().to_string();
                let limited: Arc<dyn Backend> = Arc::new(Limited { inner: backend, permits: self.inner.permits.clone() });
                let suite = AgentSuite::new(limited, self.inner.templates.clone()).with_config(self.inner.config.agent);
                (Some(Engine::new(Arc::new(suite))), model)
            }
            None => (None, "unconfigured".to_string()),
        };
        let (version, _) = watch::channel(0);
        Ok(Arc::new(Slot {
            snapshot: RwLock::new(state.clone()),
            state: Mutex::new(state),
            version,
            engine,
            model,
            last_error: StdMutex::new(None),
        }))
    }

    pub fn store(&self) -> &SessionStore {
        &self.inner.store
    }

    pub fn session_ids(&self) -> Vec<SessionId> {
        let mut ids: Vec<SessionId> = self.inner.sessions.read().expect("sessions lock poisoned").keys().cloned().collect();
        ids.sort_by(|a, b| a.as_str().cmp(b.as_str()));
        ids
    }

    fn slot(&self, id: &str) -> Option<Arc<Slot>> {
        self.inner.sessions.read().expect("sessions lock poisoned").get(&SessionId::new(id)).cloned()
    }

    /// Starts drivers for reloaded sessions that stopped before an agent step.
    pub fn resume_drivers(&self) {
        let slots: Vec<Arc<Slot>> = self.inner.sessions.read().expect("sessions lock poisoned").values().cloned().collect();
        for slot in slots {
            let snap = slot.snapshot();
            if snap.is_active() && snap.phase != Phase::AwaitingComfort {
                self.spawn_driver(slot);
            }
        }
    }

    fn persist(&self, slot: &Slot, state: &SessionState) -> Result<(), StoreError> {
        self.inner.store.save(state, self.inner.templates.id(), &slot.model)?;
        *slot.snapshot.write().expect("snapshot lock poisoned") = state.clone();
        slot.version.send_modify(|v| *v += 1);
        Ok(())
    }

    fn record_error(slot: &Slot, message: Option<String>) {
        *slot.last_error.lock().expect("error lock poisoned") = message;
        slot.version.send_modify(|v| *v += 1);
    }

    /// Runs agent steps until the session needs comfort, has ended, or fails.
    async fn drive(&self, slot: &Slot, state: &mut SessionState) -> Result<(), String> {
        let Some(engine) = &slot.engine else {
            return Err("no backend configured".into());
        };
        loop {
            match engine.step_once(state).await {
                Ok(StepResult::Advanced(_)) => self.persist(slot, state).map_err(|e| e.to_string())?,
                Ok(_) => return Ok(()),
                Err(e) => return Err(e.to_string()),
            }
        }
    }

    fn spawn_driver(&self, slot: Arc<Slot>) {
        let app = self.clone();
        tokio::spawn(async move {
            let mut state = slot.state.lock().await;
            let result = app.drive(&slot, &mut state).await;
            if let Err(e) = &result {
                warn!(session = %state.id, error = %e, "driver stopped");
            }
            Self::record_error(&slot, result.err());
        });
    }

    /// Waits until no driver or mutation holds the session.
    pub async fn wait_idle(&self, id: &SessionId) {
        if let Some(slot) = self.slot(id.as_str()) {
            drop(slot.state.lock().await);
        }
    }

    pub fn snapshot(&self, id: &SessionId) -> Option<SessionState> {
        self.slot(id.as_str()).map(|s| s.snapshot())
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

fn session_error(err: SessionError) -> ApiError {
    match err {
        SessionError::PhaseMismatch { .. } | SessionError::RoundIndexMismatch { .. } | SessionError::SessionNotActive(_) => {
            ApiError::new(StatusCode::CONFLICT, err.to_string())
        }
        SessionError::EmptyConcern | SessionError::InvalidOptions(_) | SessionError::InvalidInput { .. } => {
            ApiError::new(StatusCode::BAD_REQUEST, err.to_string())
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateSessionRequest {
    pub theme: String,
    pub concern: String,
    #[serde(default)]
    pub personality: Option<PersonalityProfile>,
    #[serde(default)]
    pub options: Option<SessionOptions>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub session: SessionState,
    pub driver_running: bool,
    pub last_error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: SessionId,
    pub theme: Theme,
    pub status: SessionStatus,
    pub phase: Phase,
    pub round: u32,
    pub rounds: u32,
}

#[derive(Debug, Deserialize)]
pub struct ComfortRequest {
    pub comforting_words: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ComfortResponse {
    /// The round the comfort completed.
    pub round: Option<RoundRecord>,
    pub next_phase: Phase,
    pub status: SessionStatus,
    pub footer: Option<TranscriptFooter>,
}

fn view(slot: &Slot) -> SessionView {
    let driver_running = slot.state.try_lock().is_err();
    SessionView {
        session: slot.snapshot(),
        driver_running,
        last_error: slot.last_error.lock().expect("error lock poisoned").clone(),
    }
}

async fn create(State(app): State<AppState>, Json(req): Json<CreateSessionRequest>) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    if app.inner.backend_factory.is_none() {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no language-model backend is configured"));
    }
    let theme: Theme = req.theme.parse().map_err(|e: DomainError| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let personality = req.personality.unwrap_or_else(PersonalityProfile::balanced);
    let options = req.options.unwrap_or_default();
    if let Some(id) = &options.id {
        if app.slot(id.as_str()).is_some() {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("session `{id}` already exists")));
        }
    }
    let state = create_session(theme, &req.concern, personality, options).map_err(session_error)?;
    let slot = app.make_slot(state.clone()).map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string()))?;
    app.persist(&slot, &state).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    app.inner.sessions.write().expect("sessions lock poisoned").insert(state.id.clone(), slot.clone());
    info!(session = %state.id, "session created");
    let body = view(&slot);
    app.spawn_driver(slot);
    Ok((StatusCode::CREATED, Json(body)))
}

async fn list(State(app): State<AppState>) -> Json<Vec<SessionSummary>> {
    let slots: Vec<Arc<Slot>> = app.inner.sessions.read().expect("sessions lock poisoned").values().cloned().collect();
    let mut out: Vec<SessionSummary> = slots
        .iter()
        .map(|s| {
            let st = s.snapshot();
            SessionSummary { id: st.id.clone(), theme: st.theme, status: st.status, phase: st.phase, round: st.round, rounds: st.rounds.len() as u32 }
        })
        .collect();
    out.sort_by(|a, b| a.id.as_str().cmp(b.id.as_str()));
    Json(out)
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let slot = app.slot(&id).ok_or_else(|| ApiError::not_found(&id))?;
    Ok(Json(view(&slot)))
}

async fn post_comfort(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ComfortRequest>,
) -> Result<Json<ComfortResponse>, ApiError> {
    let slot = app.slot(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let mut state = slot.state.try_lock().map_err(|_| {
        ApiError::new(StatusCode::CONFLICT, format!("session is busy in phase {:?}; comfort is not expected now", slot.snapshot().phase))
    })?;
    if !state.is_active() || state.phase != Phase::AwaitingComfort {
        return Err(session_error(if state.is_active() {
            SessionError::PhaseMismatch { phase: state.phase, got: FieldKind::Comfort }
        } else {
            SessionError::SessionNotActive(state.status)
        }));
    }
    let Some(engine) = slot.engine.clone() else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no language-model backend is configured"));
    };
    let round = state.round;
    state
        .step(PhaseInput::Comfort(Comfort::human(round, req.comforting_words.trim())))
        .map_err(session_error)?;
    app.persist(&slot, &state).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    if state.is_active() && state.phase == Phase::AwaitingProgression {
        if let Err(e) = engine.step_once(&mut state).await {
            AppState::record_error(&slot, Some(e.to_string()));
            return Err(ApiError::new(StatusCode::BAD_GATEWAY, e.to_string()));
        }
        app.persist(&slot, &state).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    }
    AppState::record_error(&slot, None);
    let completed = state.rounds.iter().find(|r| r.round == round).cloned();
    let footer = (!state.is_active()).then(|| {
        let o = state.outcome();
        TranscriptFooter { status: o.status, rounds: o.rounds, failure: classify_failure(&o) }
    });
    let response = ComfortResponse { round: completed, next_phase: state.phase, status: state.status, footer };
    let active = state.is_active();
    drop(state);
    if active {
        app.spawn_driver(slot);
    }
    Ok(Json(response))
}

#[derive(Debug, Default, Deserialize)]
pub struct EventsQuery {
    #[serde(default)]
    pub from: Option<u64>,
    /// `json` returns the events available now as an array instead of a stream.
    #[serde(default)]
    pub format: Option<String>,
}

fn first_seq(query: &EventsQuery, headers: &HeaderMap) -> u64 {
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(|last| last + 1);
    resume.or(query.from).unwrap_or(0)
}

async fn events(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let slot = app.slot(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let from = first_seq(&query, &headers);
    if query.format.as_deref() == Some("json") {
        let list: Vec<SessionEvent> = derive_events(&slot.snapshot()).into_iter().skip(from as usize).collect();
        return Ok(Json(list).into_response());
    }
    Ok(Sse::new(event_stream(slot, from)).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))).into_response())
}

fn event_stream(slot: Arc<Slot>, from: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = slot.version.subscribe();
    stream::unfold((slot, rx, from, false), |(slot, mut rx, cursor, done)| async move {
        if done {
            return None;
        }
        loop {
            rx.borrow_and_update();
            let events = derive_events(&slot.snapshot());
            if let Some(ev) = events.get(cursor as usize) {
                let ended = ev.kind == EventKind::SessionEnded;
                let sse = Event::default()
                    .id(ev.seq.to_string())
                    .event(ev.kind.as_str())
                    .data(serde_json::to_string(ev).expect("events serialize"));
                return Some((Ok(sse), (slot, rx, cursor + 1, ended)));
            }
            if events.last().is_some_and(|e| e.kind == EventKind::SessionEnded) {
                return None;
            }
            if rx.changed().await.is_err() {
                return None;
            }
        }
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
    pub backend_configured: bool,
}

async fn health(State(app): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        sessions: app.inner.sessions.read().expect("sessions lock poisoned").len(),
        backend_configured: app.inner.backend_factory.is_some(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VersionInfo {
    pub name: String,
    pub version: String,
    pub template_set: String,
}

async fn version(State(app): State<AppState>) -> Json<VersionInfo> {
    Json(VersionInfo {
        name: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        template_set: app.inner.templates.id().to_string(),
    })
}

pub fn router(app: AppState) -> Router {
    let static_dir = app.inner.config.static_dir.clone();
    let api = Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/comfort", post(post_comfort))
        .route("/sessions/:id/events", get(events))
        .route("/health", get(health))
        .route("/version", get(version))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, app: AppState) -> Result<(), ServiceError> {
    app.resume_drivers();
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(%addr, "listening");
    axum::serve(listener, router(app)).await?;
    Ok(())
}
