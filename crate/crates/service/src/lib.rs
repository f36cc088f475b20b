//! HTTP service behind the review and survey UI.
//!
//! It hands out annotation-review and survey tasks, serves image bytes,
//! accepts corrections and survey responses into an append-only log, and
//! recomputes the audit report from the records plus everything logged so
//! far.

mod log;
mod survey;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use ttifair_core::decision::{render_report, ReportFormat};
use ttifair_core::diversity::DiversityMetric;
use ttifair_core::ingest::{write_corrections, CorrectionEvent, ImageRecord, Layer};
use ttifair_core::pipeline::{decide_layer, score_layers, ScoreInputs, ScoreOptions, ScoredLayers};
use ttifair_core::EvalConfig;

pub use crate::log::{content_id, EventLog, LogEntry, LogError, LogState};
pub use crate::survey::{
    check_response, summarize, ReviewTask, SurveyResponse, SurveySummary, TaskBook, TaskContext,
    TaskKind, SETS_PER_QUERY,
};

pub const ENV_IMAGE_ROOT: &str = "TTIFAIR_IMAGE_ROOT";
pub const ENV_LOG_PATH: &str = "TTIFAIR_LOG_PATH";
pub const ENV_TOKEN: &str = "TTIFAIR_TOKEN";
pub const ENV_BIND_ADDR: &str = "TTIFAIR_BIND_ADDR";
pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Clone)]
pub struct ServiceSettings {
    pub image_root: PathBuf,
    pub log_path: PathBuf,
    /// Bearer token required on every request; `None` disables the check.
    pub token: Option<String>,
    pub bind_addr: SocketAddr,
    pub metric: DiversityMetric,
    pub score_options: ScoreOptions,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{var} is not set")]
    MissingEnv { var: &'static str },
    #[error("{var}: {message}")]
    BadEnv { var: &'static str, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceSettings {
    /// Reads the `TTIFAIR_*` variables. Image root and log path are required.
    pub fn from_env() -> Result<Self, ServiceError> {
        let var = |name: &'static str| std::env::var(name).ok().filter(|v| !v.is_empty());
        let image_root = var(ENV_IMAGE_ROOT).ok_or(ServiceError::MissingEnv { var: ENV_IMAGE_ROOT })?;
        let log_path = var(ENV_LOG_PATH).ok_or(ServiceError::MissingEnv { var: ENV_LOG_PATH })?;
        let bind = var(ENV_BIND_ADDR).unwrap_or_else(|| DEFAULT_BIND_ADDR.to_owned());
        let bind_addr = bind.parse().map_err(|e: std::net::AddrParseError| ServiceError::BadEnv {
            var: ENV_BIND_ADDR,
            message: e.to_string(),
        })?;
        Ok(Self {
            image_root: image_root.into(),
            log_path: log_path.into(),
            token: var(ENV_TOKEN),
            bind_addr,
            metric: DiversityMetric::default(),
            score_options: ScoreOptions::default(),
        })
    }
}

struct Cached {
    log_len: usize,
    scored: Arc<ScoredLayers>,
}

struct Shared {
    cfg: EvalConfig,
    records: Arc<Vec<ImageRecord>>,
    by_id: HashMap<String, usize>,
    tasks: TaskBook,
    image_root: PathBuf,
    token: Option<String>,
    metric: DiversityMetric,
    score_options: ScoreOptions,
    // single writer; appends are serialized here
    log: Mutex<EventLog>,
    snapshot: RwLock<Arc<LogState>>,
    report: Mutex<Option<Cached>>,
}

/// Cloneable handle to the service state.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// Opens and replays the log at `settings.log_path`.
    pub fn new(
        cfg: EvalConfig,
        records: Vec<ImageRecord>,
        settings: &ServiceSettings,
    ) -> Result<Self, ServiceError> {
        let (log, state) = EventLog::open(&settings.log_path)?;
        let by_id = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id.clone(), i))
            .collect();
        let tasks = TaskBook::build(&cfg, &records);
        Ok(Self(Arc::new(Shared {
            cfg,
            records: Arc::new(records),
            by_id,
            tasks,
            image_root: settings.image_root.clone(),
            token: settings.token.clone(),
            metric: settings.metric,
            score_options: settings.score_options,
            log: Mutex::new(log),
            snapshot: RwLock::new(Arc::new(state)),
            report: Mutex::new(None),
        })))
    }

    pub fn snapshot(&self) -> Arc<LogState> {
        self.0.snapshot.read().expect("snapshot lock").clone()
    }

    /// Appends unless the event id was seen before. Returns whether the
    /// entry was new.
    fn append(&self, entry: LogEntry) -> Result<bool, LogError> {
        let mut log = self.0.log.lock().expect("log lock");
        let current = self.snapshot();
        if entry.event_id().is_some_and(|id| current.contains(id)) {
            return Ok(false);
        }
        log.append(&entry)?;
        let mut next = (*current).clone();
        next.apply(entry);
        *self.0.snapshot.write().expect("snapshot lock") = Arc::new(next);
        Ok(true)
    }

    /// Scores the records against a log snapshot and caches the result.
    pub fn rescore(&self) -> Result<Arc<ScoredLayers>, ApiError> {
        let snap = self.snapshot();
        let s = &self.0;
        let scored = score_layers(
            &s.cfg,
            ScoreInputs {
                records: &s.records,
                corrections: Some(&snap.corrections),
                confidences: None,
            },
            s.score_options,
        )
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        let scored = Arc::new(scored);
        let mut cache = s.report.lock().expect("report lock");
        // keep whichever result saw more of the log
        if cache.as_ref().is_none_or(|c| c.log_len <= snap.len()) {
            *cache = Some(Cached {
                log_len: snap.len(),
                scored: scored.clone(),
            });
        }
        Ok(scored)
    }

    fn current_scores(&self) -> Option<(usize, Arc<ScoredLayers>)> {
        self.0
            .report
            .lock()
            .expect("report lock")
            .as_ref()
            .map(|c| (c.log_len, c.scored.clone()))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.message, self.status)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

fn unprocessable(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/meta", get(meta))
        .route("/api/tasks", get(list_tasks))
        .route("/api/corrections", post(post_correction))
        .route("/api/corrections/export", get(export_corrections))
        .route("/api/surveys", post(post_survey))
        .route("/api/surveys/summary", get(survey_summary))
        .route("/api/images/{image_id}", get(image_bytes))
        .route("/api/score", post(score_now))
        .route("/api/report", get(report))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

async fn auth(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let Some(token) = state.0.token.as_deref() else {
        return next.run(req).await;
    };
    let header_ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == token);
    // <img> tags cannot set headers, so images also take ?token=
    let query_ok = req.uri().path().starts_with("/api/images/")
        && req
            .uri()
            .query()
            .is_some_and(|q| q.split('&').any(|kv| kv.strip_prefix("token=") == Some(token)));
    if header_ok || query_ok {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong bearer token").into_response()
    }
}

async fn meta(State(state): State<AppState>) -> Json<serde_json::Value> {
    let cfg = &state.0.cfg;
    Json(json!({
        "attribute": cfg.attribute,
        "queries": cfg.queries,
        "features": cfg.features,
        "images_per_seed": cfg.images_per_seed,
        "sets_per_query": SETS_PER_QUERY,
        "records": state.0.records.len(),
    }))
}

#[derive(Debug, Deserialize)]
struct TaskQuery {
    kind: Option<String>,
    value: Option<String>,
    query: Option<String>,
}

async fn list_tasks(
    State(state): State<AppState>,
    Query(q): Query<TaskQuery>,
) -> Result<Json<Vec<ReviewTask>>, ApiError> {
    let kind: TaskKind = q
        .kind
        .as_deref()
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "kind is required"))?
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    let cfg = &state.0.cfg;
    if let Some(v) = &q.value {
        if cfg.attribute.index_of(v).is_none() {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                format!("{v:?} is not a value of {}", cfg.attribute.name),
            ));
        }
    }
    if let Some(query) = &q.query {
        if !cfg.queries.contains(query) {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                format!("{query:?} is not a configured query"),
            ));
        }
    }
    let tasks = state
        .0
        .tasks
        .filter(kind, q.value.as_deref(), q.query.as_deref())
        .cloned()
        .collect();
    Ok(Json(tasks))
}

#[derive(Debug, Serialize)]
struct Ack {
    status: &'static str,
    event_id: String,
}

fn ack(new: bool, event_id: String) -> Response {
    if new {
        (StatusCode::CREATED, Json(Ack { status: "stored", event_id })).into_response()
    } else {
        (StatusCode::OK, Json(Ack { status: "duplicate", event_id })).into_response()
    }
}

async fn post_correction(
    State(state): State<AppState>,
    Json(body): Json<serde_json::Value>,
) -> Result<Response, ApiError> {
    let mut ev: CorrectionEvent =
        serde_json::from_value(body).map_err(|e| unprocessable(e.to_string()))?;
    if !state.0.by_id.contains_key(&ev.image_id) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("unknown image {:?}", ev.image_id),
        ));
    }
    ev.check(Some(&state.0.cfg)).map_err(unprocessable)?;
    let id = ev.event_id.clone().unwrap_or_else(|| content_id(&ev));
    ev.event_id = Some(id.clone());
    let new = tokio::task::spawn_blocking(move || state.append(LogEntry::Correction(ev)))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(ack(new, id))
}

async fn export_corrections(State(state): State<AppState>) -> Response {
    let snap = state.snapshot();
    let mut buf = Vec::new();
    write_corrections(&snap.corrections, &mut buf).expect("write to memory");
    (
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        buf,
    )
        .into_response()
}

async fn post_survey(
    State(state): State<AppState>,
    Json(body): Json<serde_json::Value>,
) -> Result<Response, ApiError> {
    let mut resp: SurveyResponse =
        serde_json::from_value(body).map_err(|e| unprocessable(e.to_string()))?;
    let task = state.0.tasks.get(&resp.task_id).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown task {:?}", resp.task_id))
    })?;
    check_response(&resp, task, &state.0.cfg).map_err(unprocessable)?;
    let id = resp.event_id.clone().unwrap_or_else(|| content_id(&resp));
    resp.event_id = Some(id.clone());
    let new = tokio::task::spawn_blocking(move || state.append(LogEntry::Survey(resp)))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(ack(new, id))
}

async fn survey_summary(State(state): State<AppState>) -> Json<SurveySummary> {
    Json(summarize(&state.snapshot().surveys, &state.0.tasks))
}

fn media_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    }
}

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "webp", "gif"];

/// Rejects ids that could name anything outside the image root.
fn is_plain_name(id: &str) -> bool {
    let p = Path::new(id);
    !id.is_empty()
        && !id.contains(['/', '\\', '\0'])
        && p.components().count() == 1
        && matches!(p.components().next(), Some(Component::Normal(_)))
}

async fn image_bytes(
    State(state): State<AppState>,
    UrlPath(image_id): UrlPath<String>,
) -> Result<Response, ApiError> {
    if !is_plain_name(&image_id) {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "path escapes the image root"));
    }
    if !state.0.by_id.contains_key(&image_id) {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown image {image_id:?}")));
    }
    let root = tokio::fs::canonicalize(&state.0.image_root)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    for ext in IMAGE_EXTENSIONS {
        let candidate = root.join(format!("{image_id}.{ext}"));
        let Ok(real) = tokio::fs::canonicalize(&candidate).await else {
            continue;
        };
        // symlinks pointing out of the root are refused too
        if !real.starts_with(&root) {
            return Err(ApiError::new(StatusCode::FORBIDDEN, "path escapes the image root"));
        }
        let bytes = tokio::fs::read(&real)
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        let mut resp = Response::new(Body::from(bytes));
        resp.headers_mut()
            .insert(header::CONTENT_TYPE, HeaderValue::from_static(media_type(&real)));
        return Ok(resp);
    }
    Err(ApiError::new(
        StatusCode::NOT_FOUND,
        format!("no image file for {image_id:?}"),
    ))
}

async fn score_now(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let st = state.clone();
    let scored = tokio::task::spawn_blocking(move || st.rescore())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(json!({
        "log_events": state.snapshot().len(),
        "warnings": scored.warnings,
    })))
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    layer: Option<String>,
}

/// The structured report for one layer, recomputed when the log has grown
/// since the last scoring run.
async fn report(
    State(state): State<AppState>,
    Query(q): Query<ReportQuery>,
) -> Result<Response, ApiError> {
    let layer = match q.layer.as_deref() {
        None | Some("human") => Layer::Human,
        Some("model") => Layer::Model,
        Some(other) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("layer must be model or human, not {other:?}"),
            ))
        }
    };
    let Some((seen, mut scored)) = state.current_scores() else {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "nothing scored yet; POST /api/score first",
        ));
    };
    if seen != state.snapshot().len() {
        let st = state.clone();
        scored = tokio::task::spawn_blocking(move || st.rescore())
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    }
    let scores = match layer {
        Layer::Model => &scored.model,
        Layer::Human => scored.human.as_ref().unwrap_or(&scored.model),
    };
    let report = decide_layer(&state.0.cfg, scores, state.0.metric)
        .map_err(|e| unprocessable(e.to_string()))?;
    Ok((
        [(header::CONTENT_TYPE, "application/json")],
        render_report(&report, ReportFormat::Structured),
    )
        .into_response())
}

/// Binds and serves until ctrl-c.
pub async fn serve(state: AppState, addr: SocketAddr) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("ttifair review service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
