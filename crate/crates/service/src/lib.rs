//! HTTP backend for forced-choice proofreading sessions.
//!
//! Routes:
//! - `POST /api/sessions` opens a session over a dataset and checkpoint
//! - `GET /api/sessions/{id}/next` returns the current candidate and its views
//! - `POST /api/sessions/{id}/decision` records a decision on it
//! - `GET /api/sessions/{id}/stats` lists events so far
//! - `GET /api/sessions/{id}/labels` returns the session's current label maps

pub mod session;
pub mod views;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use proofread_core::cnn::load_checkpoint;
use proofread_core::correct::Decision;
use proofread_core::synth::derive_seed;
use proofread_core::{load_dataset, EngineConfig};
use serde::Deserialize;
use serde_json::{json, Value};

pub use session::{Choice, CursorView, Panel, Progress, Session, SessionError};

type Shared = Arc<Mutex<Session>>;

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Shared>>>,
    counter: Arc<AtomicU64>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a session built elsewhere and returns its id.
    pub fn insert(&self, session: Session) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        let id = format!("{:016x}", derive_seed(nanos, &[n]));
        self.sessions
            .write()
            .expect("session table lock")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        id
    }

    pub fn get(&self, id: &str) -> Result<Shared, SessionError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or(SessionError::NotFound)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/next", get(next_candidate))
        .route("/api/sessions/{id}/decision", post(post_decision))
        .route("/api/sessions/{id}/stats", get(stats))
        .route("/api/sessions/{id}/labels", get(labels))
        .with_state(state)
}

/// Serves the API until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use proofread_core::Error as Core;
        let (status, kind) = match &self.0 {
            SessionError::NotFound => (StatusCode::NOT_FOUND, "SessionNotFound"),
            SessionError::StaleCursor { .. } => (StatusCode::CONFLICT, "StaleCursor"),
            SessionError::NoCandidates => (StatusCode::CONFLICT, "NoCandidates"),
            SessionError::BadRequest(_) => (StatusCode::BAD_REQUEST, "BadRequest"),
            SessionError::Core(Core::MissingFile(_)) => (StatusCode::NOT_FOUND, "MissingFile"),
            SessionError::Core(Core::StaleCandidate(_)) => (StatusCode::CONFLICT, "StaleCandidate"),
            SessionError::Core(_) => (StatusCode::UNPROCESSABLE_ENTITY, "EngineError"),
        };
        let body = json!({ "error": kind, "message": self.0.to_string() });
        (status, Json(body)).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, SessionError> + Send + 'static,
) -> Result<T, SessionError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| SessionError::BadRequest(format!("worker failed: {e}")))?
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    pub seed: u64,
    pub p_t: Option<f64>,
    pub time_limit: Option<f64>,
    /// Engine overrides; `p_t` and `seed` above take precedence.
    pub config: Option<EngineConfig>,
}

async fn create_session(
    State(app): State<AppState>,
    Json(req): Json<CreateSession>,
) -> Result<Response, ApiError> {
    let session = blocking(move || {
        let dataset = load_dataset(&req.dataset)?;
        let ckpt = load_checkpoint(&req.checkpoint)?;
        let mut cfg = req.config.unwrap_or_default();
        cfg.rng_seed = req.seed;
        cfg.patch_size = ckpt.weights.arch.input_size;
        if let Some(p_t) = req.p_t {
            cfg.p_t = p_t;
        }
        cfg.validate()?;
        Session::create(dataset, Arc::new(ckpt.weights), cfg, req.time_limit)
    })
    .await?;
    let progress = session.progress();
    let id = app.insert(session);
    tracing::info!(session = %id, remaining = progress.remaining, "session created");
    Ok((
        StatusCode::CREATED,
        Json(json!({ "id": id, "progress": progress })),
    )
        .into_response())
}

async fn next_candidate(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let shared = app.get(&id)?;
    let body = blocking(move || {
        let mut s = shared.lock().expect("session lock");
        let next = s.next()?;
        let progress = s.progress();
        Ok(match next {
            None => json!({ "done": true, "progress": progress }),
            Some(c) => {
                let [outline, solid, plain] = c.views.encode();
                json!({
                    "done": false,
                    "candidate_id": c.candidate_id,
                    "type": c.kind,
                    "section": c.section,
                    "score": c.score,
                    "width": c.views.outline.width(),
                    "height": c.views.outline.height(),
                    "views": {
                        "outline": B64.encode(outline),
                        "solid": B64.encode(solid),
                        "plain": B64.encode(plain),
                    },
                    "progress": progress,
                })
            }
        })
    })
    .await?;
    Ok(Json(body))
}

/// Either `decision` or `panel` must be given.
#[derive(Debug, Deserialize)]
pub struct DecisionRequest {
    pub candidate_id: u64,
    pub decision: Option<Decision>,
    pub panel: Option<Panel>,
}

async fn post_decision(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<DecisionRequest>,
) -> ApiResult {
    let choice = match (req.decision, req.panel) {
        (Some(d), None) => Choice::Decision(d),
        (None, Some(p)) => Choice::Panel(p),
        _ => {
            return Err(SessionError::BadRequest(
                "give exactly one of `decision` or `panel`".into(),
            )
            .into())
        }
    };
    let shared = app.get(&id)?;
    let body = blocking(move || {
        let mut s = shared.lock().expect("session lock");
        let event = s.decide(req.candidate_id, choice)?;
        let done = s.next()?.is_none();
        Ok(json!({ "event": event, "progress": s.progress(), "done": done }))
    })
    .await?;
    Ok(Json(body))
}

async fn stats(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let shared = app.get(&id)?;
    let s = shared.lock().expect("session lock");
    let log = s.log();
    let accepted = log.accepted().count();
    let mut body = json!({
        "events": log.events,
        "accepted": accepted,
        "progress": s.progress(),
    });
    if let Some(trail) = s.vi_trail() {
        body["vi_trail"] = json!(trail);
    }
    Ok(Json(body))
}

async fn labels(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let shared = app.get(&id)?;
    let s = shared.lock().expect("session lock");
    let sections: Vec<Value> = s
        .dataset()
        .sections
        .iter()
        .map(|sec| {
            let bytes: Vec<u8> = sec.labels.iter().flat_map(|v| v.to_le_bytes()).collect();
            json!({
                "index": sec.index(),
                "width": sec.width(),
                "height": sec.height(),
                "labels": B64.encode(bytes),
            })
        })
        .collect();
    Ok(Json(json!({ "sections": sections })))
}
