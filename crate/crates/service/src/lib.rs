//! HTTP/JSON API over the session engine, plus a JSON-lines event stream
//! per session.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | `{"query": ...}` | 201, session view |
//! | POST | `/sessions/{id}/interventions` | `{"kind": "flag"\|"prune", "node": "v8"}` or `{"kind": "graft", "parent": "v7", "text": ...}` | session view |
//! | POST | `/sessions/{id}/regenerate` | none | session view |
//! | POST | `/sessions/{id}/accept` | none | `{"answer": ...}` |
//! | GET | `/sessions/{id}` | | session view with events |
//! | GET | `/sessions/{id}/events` | | `application/x-ndjson` stream |
//!
//! Errors are `{"code", "message", "status"}`; see [`ErrorCode`].

mod error;
mod stream;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::{broadcast, Mutex};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use viscot_core::session::{Engine, Session, SessionError, SessionEvent, SessionStatus, SessionStore};
use viscot_core::{Backend, Intervention};

pub use error::{ApiError, ErrorCode};
pub use stream::{event_stream, DROPPED_NOTICE};

pub const NDJSON: &str = "application/x-ndjson";

struct Slot {
    session: Mutex<Session>,
    tx: broadcast::Sender<SessionEvent>,
}

/// Shared server state: the engine, one backend, and live sessions.
pub struct AppState {
    engine: Arc<Engine>,
    backend: Arc<dyn Backend>,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    store: Option<SessionStore>,
    heartbeat: Duration,
    event_buffer: usize,
}

impl AppState {
    pub fn new(engine: Engine, backend: Arc<dyn Backend>) -> Self {
        AppState {
            engine: Arc::new(engine),
            backend,
            sessions: RwLock::default(),
            store: None,
            heartbeat: Duration::from_secs(15),
            event_buffer: 256,
        }
    }

    /// Writes every session to `store` after each change.
    pub fn with_store(mut self, store: SessionStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn with_heartbeat(mut self, heartbeat: Duration) -> Self {
        self.heartbeat = heartbeat;
        self
    }

    /// Events a stream subscriber may fall behind by before it is dropped.
    pub fn with_event_buffer(mut self, n: usize) -> Self {
        self.event_buffer = n.max(1);
        self
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::session_not_found(id))
    }

    fn persist(&self, session: &Session) -> Result<(), ApiError> {
        if let Some(store) = &self.store {
            store.save(session)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub query: String,
    pub status: SessionStatus,
    pub final_answer: Option<String>,
    pub intervention_count: u32,
    pub graph: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<SessionEvent>>,
}

impl SessionView {
    fn of(session: &Session, with_events: bool) -> Self {
        SessionView {
            id: session.id.clone(),
            query: session.query.clone(),
            status: session.status,
            final_answer: session.final_answer.clone(),
            intervention_count: session.intervention_count,
            graph: session.graph.to_json_value(),
            events: with_events.then(|| session.events.clone()),
        }
    }
}

#[derive(Deserialize)]
struct CreateBody {
    query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerBody {
    pub answer: String,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("invalid request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, format!("worker failed: {e}")))
}

/// Runs `op` on a copy of the session and commits the copy only if the op
/// and persistence both succeed. New events go out to stream subscribers.
async fn mutate<T, F>(state: &AppState, id: &str, op: F) -> Result<(T, SessionView), ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Engine, &dyn Backend, &mut Session) -> Result<T, SessionError> + Send + 'static,
{
    let slot = state.slot(id)?;
    let mut current = slot.session.lock().await;
    let mut draft = current.clone();
    let (engine, backend) = (state.engine.clone(), state.backend.clone());
    let (result, draft) = blocking(move || {
        let r = op(&engine, &*backend, &mut draft);
        (r, draft)
    })
    .await?;
    let value = result?;
    state.persist(&draft)?;
    let first_new = current.events.len();
    *current = draft;
    for event in &current.events[first_new..] {
        let _ = slot.tx.send(event.clone());
    }
    Ok((value, SessionView::of(&current, false)))
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let CreateBody { query } = parse_body(&body)?;
    let (engine, backend) = (state.engine.clone(), state.backend.clone());
    let session = blocking(move || engine.start_session(&query, &*backend)).await??;
    state.persist(&session)?;
    let view = SessionView::of(&session, false);
    let (tx, _) = broadcast::channel(state.event_buffer);
    let slot = Arc::new(Slot { session: Mutex::new(session), tx });
    state
        .sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(view.id.clone(), slot);
    tracing::info!(session = %view.id, "session created");
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn intervene(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let intervention: Intervention = parse_body(&body)?;
    let (_, view) = mutate(&state, &id, move |engine, _, s| engine.apply_intervention(s, intervention)).await?;
    Ok(Json(view))
}

async fn regenerate(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let (_, view) = mutate(&state, &id, |engine, backend, s| engine.regenerate(s, backend)).await?;
    Ok(Json(view))
}

async fn accept(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<AnswerBody>, ApiError> {
    let (answer, _) = mutate(&state, &id, |engine, _, s| engine.accept(s)).await?;
    Ok(Json(AnswerBody { answer }))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let slot = state.slot(&id)?;
    let session = slot.session.lock().await;
    Ok(Json(SessionView::of(&session, true)))
}

async fn events(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    // Subscribing under the session lock means no event is missed or repeated
    // between the backlog and the live feed.
    let (backlog, rx) = {
        let session = slot.session.lock().await;
        (session.events.clone(), slot.tx.subscribe())
    };
    let body = Body::from_stream(event_stream(backlog, rx, state.heartbeat));
    Ok(([(header::CONTENT_TYPE, NDJSON), (header::CACHE_CONTROL, "no-cache")], body).into_response())
}

fn cors(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    Some(CorsLayer::new().allow_origin(allow).allow_methods(Any).allow_headers(Any))
}

/// The API routes. `cors_origins` lists allowed browser origins (`*` for
/// any); empty disables CORS headers.
pub fn router(state: Arc<AppState>, cors_origins: &[String]) -> Router {
    let app = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/interventions", post(intervene))
        .route("/sessions/{id}/regenerate", post(regenerate))
        .route("/sessions/{id}/accept", post(accept))
        .route("/sessions/{id}/events", get(events))
        .with_state(state);
    match cors(cors_origins) {
        Some(layer) => app.layer(layer),
        None => app,
    }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub cors_origins: Vec<String>,
    pub store: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            cors_origins: Vec::new(),
            store: None,
        }
    }
}

/// Binds `config.addr` and serves until the process is stopped.
pub async fn serve(state: AppState, config: ServeConfig) -> std::io::Result<()> {
    let state = match &config.store {
        Some(dir) => state.with_store(SessionStore::new(dir)),
        None => state,
    };
    let listener = std::net::TcpListener::bind(config.addr)?;
    serve_on(listener, state, &config.cors_origins).await
}

/// Serves on an already bound listener.
pub async fn serve_on(listener: std::net::TcpListener, state: AppState, cors_origins: &[String]) -> std::io::Result<()> {
    listener.set_nonblocking(true)?;
    let listener = tokio::net::TcpListener::from_std(listener)?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::new(state), cors_origins)).await
}
