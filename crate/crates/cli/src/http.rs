//! HTTP service over sessions. Mutations of one session are serialized by
//! its own lock; different sessions proceed independently.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};

use crate::session::{Engine, Session};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRequest {
    #[serde(default)]
    pub seed: u64,
    /// Exact object count; the session default range when absent.
    #[serde(default)]
    pub objects: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

pub struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(status: StatusCode, error: &str, detail: impl Into<String>) -> Self {
        Self(
            status,
            ErrorBody {
                error: error.into(),
                detail: detail.into(),
            },
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> HttpResponse {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed body", r.body_text())
    }
}

impl From<namegrounder_core::Error> for ApiError {
    fn from(e: namegrounder_core::Error) -> Self {
        use namegrounder_core::Error as E;
        match e {
            E::Validation(_) | E::Placement { .. } => ApiError::new(StatusCode::BAD_REQUEST, "invalid request", e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal error", e.to_string()),
        }
    }
}

pub struct AppState {
    engine: Engine,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(engine: Engine) -> Arc<Self> {
        Arc::new(Self {
            engine,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    async fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown session", id))
    }
}

type Shared = State<Arc<AppState>>;

fn objects_range(objects: Option<usize>) -> Option<std::ops::RangeInclusive<usize>> {
    objects.map(|n| n..=n)
}

/// Optional JSON body: an empty body means defaults.
fn optional_body(body: Result<Json<SceneRequest>, JsonRejection>) -> Result<SceneRequest, ApiError> {
    match body {
        Ok(Json(r)) => Ok(r),
        Err(JsonRejection::MissingJsonContentType(_)) => Ok(SceneRequest::default()),
        Err(e) => Err(e.into()),
    }
}

async fn create_session(
    State(state): Shared,
    body: Result<Json<SceneRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let req = optional_body(body)?;
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let session = Session::new(&state.engine, id.clone(), req.seed, objects_range(req.objects))?;
    let payload = session.scene_payload(&state.engine);
    state.sessions.write().await.insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(payload)))
}

async fn get_scene(State(state): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let session = state.session(&id).await?;
    let s = session.lock().await;
    Ok(Json(s.scene_payload(&state.engine)))
}

async fn post_instruction(
    State(state): Shared,
    Path(id): Path<String>,
    body: Result<Json<InstructionRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let session = state.session(&id).await?;
    let Json(req) = body?;
    let mut s = session.lock().await;
    Ok(Json(s.submit_instruction(&state.engine, &req.text)?))
}

async fn get_memory(State(state): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let session = state.session(&id).await?;
    let s = session.lock().await;
    Ok(Json(s.memory_payload()))
}

async fn new_scene(
    State(state): Shared,
    Path(id): Path<String>,
    body: Result<Json<SceneRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let session = state.session(&id).await?;
    let Json(req) = body?;
    let mut s = session.lock().await;
    s.new_scene(&state.engine, req.seed, objects_range(req.objects))?;
    Ok(Json(s.scene_payload(&state.engine)))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/scene", get(get_scene))
        .route("/sessions/{id}/instruction", post(post_instruction))
        .route("/sessions/{id}/memory", get(get_memory))
        .route("/sessions/{id}/newscene", post(new_scene))
        .with_state(state)
}

pub async fn serve(engine: Engine, addr: std::net::SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(engine))).await?;
    Ok(())
}
