//! HTTP handlers.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prefkg::acquisition::DuelQuery;
use prefkg::{BoxDomain, Error, Method};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::session::{
    check_create, Event, Grid, HistoryEntry, Session, SessionConfig, SessionState, Status, Winner,
};
use crate::store::EventStore;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("no session `{id}`"),
        )
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::Unknown { .. } => {
                return Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", e.to_string())
            }
            e if e.is_numeric() => "numeric_failure",
            _ => "internal",
        };
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(serde_json::json!({ "error": self.code, "message": self.message }));
        if self.status == StatusCode::SERVICE_UNAVAILABLE {
            (self.status, [(header::RETRY_AFTER, "1")], body).into_response()
        } else {
            (self.status, body).into_response()
        }
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_body",
            e.to_string(),
        )
    })
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

struct Handle {
    /// Serializes every mutation of one session.
    core: Mutex<Session>,
    /// Last consistent state, for reads that must not wait on a fit.
    snapshot: RwLock<Arc<SessionState>>,
    fitting: AtomicBool,
}

impl Handle {
    fn new(s: Session) -> Self {
        Self {
            snapshot: RwLock::new(Arc::new(s.state().clone())),
            core: Mutex::new(s),
            fitting: AtomicBool::new(false),
        }
    }

    fn publish(&self, s: &Session) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(s.state().clone());
    }

    fn snapshot(&self) -> Arc<SessionState> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn status(&self, s: &SessionState) -> Status {
        if self.fitting.load(Ordering::SeqCst) {
            Status::Fitting
        } else {
            s.status
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Handle>>>>,
    store: Option<EventStore>,
}

impl AppState {
    /// A service without persistence.
    pub fn in_memory() -> Self {
        Self {
            sessions: Arc::default(),
            store: None,
        }
    }

    /// A service persisting to `dir`, with every stored session replayed.
    pub fn open(dir: &Path) -> prefkg::Result<Self> {
        let store = EventStore::open(dir)?;
        let mut sessions = HashMap::new();
        for events in store.load_all()? {
            let s = Session::replay(&events)?;
            sessions.insert(s.state().id.clone(), Arc::new(Handle::new(s)));
        }
        log::info!(
            "replayed {} session(s) from {}",
            sessions.len(),
            dir.display()
        );
        Ok(Self {
            sessions: Arc::new(RwLock::new(sessions)),
            store: Some(store),
        })
    }

    fn get(&self, id: &str) -> ApiResult<Arc<Handle>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn persist(&self, id: &str, event: &Event) -> ApiResult<()> {
        if let Some(store) = &self.store {
            store.append(id, event)?;
        }
        Ok(())
    }

    /// Serialized state of a session, e.g. to compare a live service with a
    /// replayed one.
    pub async fn session_json(&self, id: &str) -> Option<String> {
        let h = self
            .sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()?;
        let core = h.core.lock().await;
        serde_json::to_string(core.state()).ok()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .expect("session map lock")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/estimate", get(estimate))
        .route("/sessions/{id}/history", get(history))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    lower: Vec<f64>,
    upper: Vec<f64>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    method: Option<Method>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    config: Option<SessionConfig>,
}

#[derive(Debug, Serialize)]
struct SessionInfo {
    id: String,
    dim: usize,
    method: Method,
    labels: Option<Vec<String>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    status: Status,
    n_duels: usize,
}

async fn create_session(
    State(app): State<AppState>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let req: CreateRequest = parse_body(&body)?;
    let domain = BoxDomain::new(req.lower, req.upper)?;
    let config = req.config.unwrap_or_default();
    check_create(&domain, req.labels.as_deref(), &config)?;
    let uuid = uuid::Uuid::new_v4();
    let id = uuid.simple().to_string();
    let event = Event::Created {
        id: id.clone(),
        domain,
        labels: req.labels,
        method: req.method.unwrap_or(Method::Kg),
        config,
        seed: req.seed.unwrap_or(uuid.as_u64_pair().0),
        at_ms: now_ms(),
    };
    let session = tokio::task::spawn_blocking(move || Session::create(&event).map(|s| (s, event)))
        .await
        .map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        })??;
    let (session, event) = session;
    app.persist(&id, &event)?;
    let s = session.state();
    let info = SessionInfo {
        id: id.clone(),
        dim: s.domain.dim(),
        method: s.method,
        labels: s.labels.clone(),
        lower: s.domain.lower().to_vec(),
        upper: s.domain.upper().to_vec(),
        status: s.status,
        n_duels: 0,
    };
    app.sessions
        .write()
        .expect("session map lock")
        .insert(id, Arc::new(Handle::new(session)));
    Ok((StatusCode::CREATED, Json(info)))
}

#[derive(Debug, Serialize)]
struct NextResponse {
    id: String,
    index: usize,
    cold_start: bool,
    query: DuelQuery,
}

async fn next(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<NextResponse>> {
    let h = app.get(&id)?;
    let Ok(mut core) = h.core.try_lock() else {
        let code = if h.fitting.load(Ordering::SeqCst) {
            "fitting"
        } else {
            "busy"
        };
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            code,
            "session is busy, retry later",
        ));
    };
    let respond = |s: &Session, query: DuelQuery| NextResponse {
        id: id.clone(),
        index: s.n_duels(),
        cold_start: s.in_cold_start(),
        query,
    };
    if let Some(q) = core.state().pending.clone() {
        return Ok(Json(respond(&core, q)));
    }
    let snapshot = core.clone();
    let query = tokio::task::spawn_blocking(move || snapshot.propose())
        .await
        .map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        })??;
    let event = Event::Next {
        query: query.clone(),
        at_ms: now_ms(),
    };
    let mut updated = core.clone();
    updated.apply(&event)?;
    app.persist(&id, &event)?;
    *core = updated;
    h.publish(&core);
    Ok(Json(respond(&core, query)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRequest {
    winner: Winner,
}

#[derive(Debug, Serialize)]
struct FeedbackResponse {
    accepted: bool,
    n_duels: usize,
    estimate: EstimateResponse,
}

async fn feedback(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<FeedbackResponse>> {
    let h = app.get(&id)?;
    let req: FeedbackRequest = parse_body(&body)?;
    let mut core = h.core.lock().await;
    if core.state().pending.is_none() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "no_pending_duel",
            "no duel is awaiting feedback",
        ));
    }
    let event = Event::Feedback {
        winner: req.winner,
        at_ms: now_ms(),
    };
    let mut updated = core.clone();
    h.fitting.store(true, Ordering::SeqCst);
    let fitted =
        tokio::task::spawn_blocking(move || updated.apply(&event).map(|_| (updated, event))).await;
    h.fitting.store(false, Ordering::SeqCst);
    let (updated, event) = fitted.map_err(|e| {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    })??;
    app.persist(&id, &event)?;
    *core = updated;
    h.publish(&core);
    let state = core.state();
    Ok(Json(FeedbackResponse {
        accepted: true,
        n_duels: state.dataset.n_duels(),
        estimate: estimate_response(state, state.status),
    }))
}

#[derive(Debug, Serialize)]
struct EstimateResponse {
    id: String,
    status: Status,
    n_duels: usize,
    labels: Option<Vec<String>>,
    x_hat: Vec<f64>,
    mean_at_x_hat: f64,
    flat_prior: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<Grid>,
    history: Vec<HistoryEntry>,
}

fn estimate_response(s: &SessionState, status: Status) -> EstimateResponse {
    EstimateResponse {
        id: s.id.clone(),
        status,
        n_duels: s.dataset.n_duels(),
        labels: s.labels.clone(),
        x_hat: s.estimate.x_hat.clone(),
        mean_at_x_hat: s.estimate.mean_at_x_hat,
        flat_prior: s.estimate.flat_prior,
        grid: s.estimate.grid.clone(),
        history: s.history.clone(),
    }
}

async fn estimate(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<EstimateResponse>> {
    let h = app.get(&id)?;
    let s = h.snapshot();
    Ok(Json(estimate_response(&s, h.status(&s))))
}

#[derive(Debug, Serialize)]
struct HistoryResponse {
    id: String,
    entries: Vec<HistoryEntry>,
}

async fn history(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<HistoryResponse>> {
    let h = app.get(&id)?;
    let s = h.snapshot();
    Ok(Json(HistoryResponse {
        id,
        entries: s.history.clone(),
    }))
}
