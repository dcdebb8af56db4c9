//! HTTP+JSON API for live tutoring sessions.
//!
//! Each session sits behind its own mutex, so rounds of one session never
//! interleave while different sessions proceed in parallel. Every mutation's
//! events are appended to the session's log and synced before the response
//! goes out. On startup all logs are replayed.

mod error;
pub mod store;

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use riarit_core::exercise::{AnswerSubmission, Catalog, ExerciseInstance};
use riarit_core::session::{FinishReason, Session, SessionEvent, SessionSnapshot, SubmitResult};
use riarit_core::{Scenario, SessionError, TeacherKind};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};

pub use error::ApiError;
use store::{SessionMeta, Store, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("session `{id}` cannot be restored: {source}")]
    Restore {
        id: String,
        #[source]
        source: SessionError,
    },
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub scenario: Arc<Scenario>,
    pub catalog: Arc<Catalog>,
    /// Teacher used when a create request names none.
    pub default_teacher: TeacherKind,
    pub data_dir: PathBuf,
    /// When set, a session created without a seed gets `base + n` where `n`
    /// is its number; otherwise the seed is drawn at random.
    pub seed_base: Option<u64>,
}

struct Entry {
    session: Session,
    /// Number of events already on disk.
    persisted: usize,
    created_unix_ms: u64,
}

struct Inner {
    scenario: Arc<Scenario>,
    catalog: Arc<Catalog>,
    default_teacher: TeacherKind,
    seed_base: Option<u64>,
    store: Store,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    next_id: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn session_id(n: u64) -> String {
    format!("s{n:06}")
}

impl AppState {
    /// Opens the data directory and restores every stored session.
    pub fn open(config: ServerConfig) -> Result<Self, ServerError> {
        let store = Store::open(&config.data_dir)?;
        let mut sessions = HashMap::new();
        let mut max_id = 0u64;
        for stored in store.load_all()? {
            if let Some(n) = stored.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                max_id = max_id.max(n);
            }
            if stored.events.is_empty() {
                continue;
            }
            let session = Session::replay(
                Arc::clone(&config.scenario),
                Arc::clone(&config.catalog),
                &stored.events,
            )
            .map_err(|source| ServerError::Restore {
                id: stored.id.clone(),
                source,
            })?;
            // Derived events lost between two appends are rewritten.
            store.append(&stored.id, &session.events()[stored.events.len()..])?;
            let entry = Entry {
                persisted: session.events().len(),
                session,
                created_unix_ms: stored.meta.map(|m| m.created_unix_ms).unwrap_or_else(now_ms),
            };
            sessions.insert(stored.id, Arc::new(Mutex::new(entry)));
        }
        tracing::info!(restored = sessions.len(), dir = %config.data_dir.display(), "session store opened");
        Ok(Self(Arc::new(Inner {
            scenario: config.scenario,
            catalog: config.catalog,
            default_teacher: config.default_teacher,
            seed_base: config.seed_base,
            store,
            sessions: RwLock::new(sessions),
            next_id: AtomicU64::new(max_id + 1),
        })))
    }

    pub fn scenario(&self) -> &Scenario {
        &self.0.scenario
    }

    async fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ApiError> {
        self.0
            .sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    /// Writes pending events. On failure the in-memory session is rolled back
    /// to what is on disk, so memory never runs ahead of the log.
    fn persist(&self, entry: &mut Entry) -> Result<(), ApiError> {
        let id = entry.session.id().to_string();
        let pending = &entry.session.events()[entry.persisted..];
        if let Err(e) = self.0.store.append(&id, pending) {
            if entry.persisted == 0 {
                return Err(e.into());
            }
            let durable = entry.session.events()[..entry.persisted].to_vec();
            entry.session = Session::replay(Arc::clone(&self.0.scenario), Arc::clone(&self.0.catalog), &durable)
                .expect("persisted prefix replays");
            return Err(e.into());
        }
        entry.persisted = entry.session.events().len();
        Ok(())
    }

    /// Applies the optional wall-clock cap.
    fn check_time(&self, entry: &mut Entry) -> Result<(), ApiError> {
        let Some(minutes) = self.0.scenario.session.max_minutes else {
            return Ok(());
        };
        let elapsed_ms = now_ms().saturating_sub(entry.created_unix_ms);
        if entry.session.status().is_active() && elapsed_ms >= u64::from(minutes) * 60_000 {
            entry.session.finish(FinishReason::TimeLimit)?;
            self.persist(entry)?;
        }
        Ok(())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub scenario: Option<String>,
    pub teacher: Option<TeacherKind>,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub scenario: String,
    pub teacher: TeacherKind,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HintResponse {
    pub largest_item: u32,
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<CreateRequest>,
) -> Result<(StatusCode, Json<CreateResponse>), ApiError> {
    let inner = &state.0;
    if let Some(name) = &req.scenario {
        if name != &inner.scenario.id {
            return Err(ApiError::UnknownScenario(name.clone()));
        }
    }
    let teacher = req.teacher.unwrap_or(inner.default_teacher);
    let n = inner.next_id.fetch_add(1, Ordering::SeqCst);
    let id = session_id(n);
    let seed = req
        .seed
        .or_else(|| inner.seed_base.map(|b| b.wrapping_add(n)))
        .unwrap_or_else(rand::random);
    let session = Session::create(&id, Arc::clone(&inner.scenario), Arc::clone(&inner.catalog), teacher, seed)?;
    let created_unix_ms = now_ms();
    inner.store.write_meta(&id, &SessionMeta { created_unix_ms })?;
    let mut entry = Entry {
        session,
        persisted: 0,
        created_unix_ms,
    };
    state.persist(&mut entry)?;
    inner
        .sessions
        .write()
        .await
        .insert(id.clone(), Arc::new(Mutex::new(entry)));
    tracing::info!(session = %id, %teacher, seed, "session created");
    Ok((
        StatusCode::CREATED,
        Json(CreateResponse {
            session_id: id,
            scenario: inner.scenario.id.clone(),
            teacher,
            seed,
        }),
    ))
}

async fn next_exercise(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<ExerciseInstance>, ApiError> {
    let entry = state.entry(&id).await?;
    let mut entry = entry.lock().await;
    state.check_time(&mut entry)?;
    let instance = entry.session.next_exercise()?;
    state.persist(&mut entry)?;
    Ok(Json(instance))
}

async fn submit_answer(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(submission): Json<AnswerSubmission>,
) -> Result<Json<SubmitResult>, ApiError> {
    let entry = state.entry(&id).await?;
    let mut entry = entry.lock().await;
    state.check_time(&mut entry)?;
    let result = entry.session.submit_answer(submission)?;
    state.persist(&mut entry)?;
    Ok(Json(result))
}

async fn request_hint(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<HintResponse>, ApiError> {
    let entry = state.entry(&id).await?;
    let mut entry = entry.lock().await;
    state.check_time(&mut entry)?;
    let largest_item = entry.session.hint()?;
    state.persist(&mut entry)?;
    Ok(Json(HintResponse { largest_item }))
}

async fn get_state(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionSnapshot>, ApiError> {
    let entry = state.entry(&id).await?;
    let mut entry = entry.lock().await;
    state.check_time(&mut entry)?;
    Ok(Json(entry.session.snapshot()))
}

async fn get_events(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Vec<SessionEvent>>, ApiError> {
    let entry = state.entry(&id).await?;
    let entry = entry.lock().await;
    Ok(Json(entry.session.events().to_vec()))
}

async fn get_scenario(State(state): State<AppState>) -> impl IntoResponse {
    (
        [(header::CONTENT_TYPE, "application/json")],
        state.0.scenario.to_json(),
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub scenario: String,
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        scenario: state.0.scenario.id.clone(),
    })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/scenario", get(get_scenario))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/next", get(next_exercise))
        .route("/api/sessions/{id}/answer", post(submit_answer))
        .route("/api/sessions/{id}/hint", post(request_hint))
        .route("/api/sessions/{id}/state", get(get_state))
        .route("/api/sessions/{id}/events", get(get_events))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    state: AppState,
    addr: SocketAddr,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutdown requested");
}
