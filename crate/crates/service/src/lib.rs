//! HTTP API over exploration sessions. Every route lives under `/v1`.
//!
//! A session is created from a multipart upload (`edges`, optional
//! `attributes`, optional JSON `params`). The pipeline runs on a blocking
//! worker; poll `/status` until `state` is `ready`, or pass `?wait=true`
//! to block. Mutations on one session are serialized by a per-session lock.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use clustervis_core::explorer::{StatMode, StatRequest, ViewDocument};
use clustervis_core::export::ExportFormat;
use clustervis_core::pipeline::{self, PipelineParams, Summary};
use clustervis_core::{Error, Explorer};

const MAX_UPLOAD: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, reason: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                reason: reason.into(),
            },
        }
    }

    fn unknown_session(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::TerminalNode(_) => (StatusCode::CONFLICT, "terminal_node"),
            Error::SignificanceBoundary => (StatusCode::CONFLICT, "significance_boundary"),
            Error::NothingToUndo => (StatusCode::CONFLICT, "nothing_to_undo"),
            Error::Parse { .. }
            | Error::DuplicateAttributeRow(_)
            | Error::InvalidGraph(_)
            | Error::EdgelessGraph => (StatusCode::BAD_REQUEST, "invalid_input"),
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_request"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.body }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum Status {
    Running { stage: String },
    Ready { summary: Summary },
    Failed { error: ErrorBody },
}

struct Session {
    params: PipelineParams,
    status: Mutex<Status>,
    explorer: tokio::sync::Mutex<Option<Explorer>>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    id: String,
    params: PipelineParams,
    summary: Summary,
    explorer: Explorer,
}

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    data_dir: Option<PathBuf>,
}

impl AppState {
    pub fn in_memory() -> Arc<Self> {
        Arc::new(AppState::default())
    }

    /// Persists sessions under `dir` and reloads any found there.
    pub fn with_data_dir(dir: impl Into<PathBuf>) -> std::io::Result<Arc<Self>> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let snap: Snapshot = serde_json::from_str(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            sessions.insert(
                snap.id.clone(),
                Arc::new(Session {
                    params: snap.params,
                    status: Mutex::new(Status::Ready {
                        summary: snap.summary,
                    }),
                    explorer: tokio::sync::Mutex::new(Some(snap.explorer)),
                }),
            );
        }
        Ok(Arc::new(AppState {
            sessions: RwLock::new(sessions),
            data_dir: Some(dir),
        }))
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    fn persist(&self, id: &str, session: &Session, explorer: &Explorer) {
        let Some(dir) = &self.data_dir else { return };
        let Status::Ready { summary } = session.status.lock().unwrap().clone() else {
            return;
        };
        let snap = Snapshot {
            id: id.to_owned(),
            params: session.params,
            summary,
            explorer: explorer.clone(),
        };
        let text = serde_json::to_string(&snap).expect("snapshot serializes");
        // write then rename so a crash never leaves a torn file
        let tmp = dir.join(format!("{id}.json.tmp"));
        if std::fs::write(&tmp, text).is_ok() {
            let _ = std::fs::rename(&tmp, snapshot_path(dir, id));
        }
    }
}

fn snapshot_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

pub fn router(state: Arc<AppState>) -> Router {
    let v1 = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/status", get(status))
        .route("/sessions/{id}/view", get(view))
        .route("/sessions/{id}/refine", post(refine))
        .route("/sessions/{id}/coarsen", post(coarsen))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/export", get(export))
        .route("/sessions/{id}/hierarchy", get(hierarchy));
    Router::new()
        .nest("/v1", v1)
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state)
}

pub async fn serve(addr: std::net::SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Default, Deserialize)]
struct CreateQuery {
    #[serde(default)]
    wait: bool,
}

#[derive(Debug, Serialize)]
struct StatusDoc {
    id: String,
    #[serde(flatten)]
    status: Status,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Query(q): Query<CreateQuery>,
    mut form: Multipart,
) -> ApiResult<(StatusCode, Json<StatusDoc>)> {
    let mut edges = None;
    let mut attributes = None;
    let mut params = PipelineParams::default();
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", e.to_string()))?
    {
        let name = field.name().unwrap_or_default().to_owned();
        let text = field
            .text()
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", e.to_string()))?;
        match name.as_str() {
            "edges" => edges = Some(text),
            "attributes" => attributes = Some(text),
            "params" => {
                params = serde_json::from_str(&text).map_err(|e| {
                    ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", format!("params: {e}"))
                })?
            }
            other => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "invalid_input",
                    format!("unexpected field `{other}`"),
                ))
            }
        }
    }
    let edges = edges.ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", "missing `edges` field")
    })?;
    let prepared = pipeline::prepare(&edges, attributes.as_deref(), &params)?;

    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Arc::new(Session {
        params,
        status: Mutex::new(Status::Running {
            stage: "hierarchy".into(),
        }),
        explorer: tokio::sync::Mutex::new(None),
    });
    state
        .sessions
        .write()
        .unwrap()
        .insert(id.clone(), session.clone());

    let task = {
        let state = state.clone();
        let id = id.clone();
        tokio::spawn(async move {
            // hold the session lock so early moves wait instead of failing
            let mut slot = session.explorer.lock().await;
            let result = tokio::task::spawn_blocking(move || pipeline::run(prepared, &params))
                .await
                .unwrap_or_else(|e| Err(Error::InvalidParameter(format!("worker failed: {e}"))));
            match result {
                Ok((explorer, summary)) => {
                    *session.status.lock().unwrap() = Status::Ready { summary };
                    state.persist(&id, &session, &explorer);
                    *slot = Some(explorer);
                }
                Err(e) => {
                    *session.status.lock().unwrap() = Status::Failed {
                        error: ApiError::from(e).body,
                    };
                }
            }
        })
    };
    if q.wait {
        let _ = task.await;
    }
    let status = state.session(&id)?.status.lock().unwrap().clone();
    let code = match status {
        Status::Running { .. } => StatusCode::ACCEPTED,
        _ => StatusCode::CREATED,
    };
    Ok((code, Json(StatusDoc { id, status })))
}

async fn status(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<StatusDoc>> {
    let status = state.session(&id)?.status.lock().unwrap().clone();
    Ok(Json(StatusDoc { id, status }))
}

#[derive(Debug, Default, Deserialize)]
struct ViewQuery {
    stat: Option<String>,
    mode: Option<String>,
    category: Option<String>,
    format: Option<String>,
}

impl ViewQuery {
    fn stat(&self) -> ApiResult<Option<StatRequest>> {
        let Some(attribute) = &self.stat else {
            if self.mode.is_some() || self.category.is_some() {
                return Err(Error::InvalidParameter("`mode` and `category` need `stat`".into()).into());
            }
            return Ok(None);
        };
        let mode = match &self.mode {
            Some(m) => m.parse::<StatMode>()?,
            None => StatMode::P,
        };
        Ok(Some(StatRequest {
            attribute: attribute.clone(),
            mode,
            category: self.category.clone(),
        }))
    }
}

/// Runs `f` on the session's explorer under its lock; persists after
/// mutations.
async fn with_explorer<T>(
    state: &AppState,
    id: &str,
    mutates: bool,
    f: impl FnOnce(&mut Explorer) -> ApiResult<T>,
) -> ApiResult<T> {
    let session = state.session(id)?;
    let mut slot = session.explorer.lock().await;
    let Some(explorer) = slot.as_mut() else {
        let status = session.status.lock().unwrap().clone();
        return Err(match status {
            Status::Failed { error } => ApiError {
                status: StatusCode::CONFLICT,
                body: error,
            },
            _ => ApiError::new(StatusCode::CONFLICT, "not_ready", "session is still running"),
        });
    };
    let out = f(explorer)?;
    if mutates {
        state.persist(id, &session, explorer);
    }
    Ok(out)
}

async fn view(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ViewQuery>,
) -> ApiResult<Json<ViewDocument>> {
    let stat = q.stat()?;
    with_explorer(&state, &id, false, |ex| Ok(Json(ex.document(stat.as_ref())?))).await
}

#[derive(Debug, Deserialize)]
struct RefineBody {
    cluster: usize,
}

#[derive(Debug, Default, Deserialize)]
struct CoarsenBody {
    target: Option<usize>,
}

fn parse_body<T: serde::de::DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", format!("body: {e}")))
}

async fn refine(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ViewQuery>,
    body: Bytes,
) -> ApiResult<Json<ViewDocument>> {
    let stat = q.stat()?;
    let body: RefineBody = parse_body(&body)?;
    with_explorer(&state, &id, true, |ex| {
        ex.refine(body.cluster)?;
        Ok(Json(ex.document(stat.as_ref())?))
    })
    .await
}

/// Body `{"target": id}` coarsens to that node's parent; an empty body or
/// `{}` applies the next recorded merge.
async fn coarsen(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ViewQuery>,
    body: Bytes,
) -> ApiResult<Json<ViewDocument>> {
    let stat = q.stat()?;
    let body: CoarsenBody = if body.iter().all(u8::is_ascii_whitespace) {
        CoarsenBody::default()
    } else {
        parse_body(&body)?
    };
    with_explorer(&state, &id, true, |ex| {
        match body.target {
            Some(t) => ex.coarsen(t)?,
            None => ex.coarsen_step()?,
        }
        Ok(Json(ex.document(stat.as_ref())?))
    })
    .await
}

async fn undo(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ViewQuery>,
) -> ApiResult<Json<ViewDocument>> {
    let stat = q.stat()?;
    with_explorer(&state, &id, true, |ex| {
        ex.undo()?;
        Ok(Json(ex.document(stat.as_ref())?))
    })
    .await
}

async fn export(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ViewQuery>,
) -> ApiResult<Response> {
    let format: ExportFormat = q
        .format
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter("missing `format`".into()))?
        .parse()?;
    let stat = q.stat()?;
    let body = with_explorer(&state, &id, false, |ex| Ok(ex.export(format, stat.as_ref())?)).await?;
    Ok(([(header::CONTENT_TYPE, format.content_type())], body).into_response())
}

async fn hierarchy(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    let body = with_explorer(&state, &id, false, |ex| {
        Ok(ex.export(ExportFormat::HierarchyJson, None)?)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}
