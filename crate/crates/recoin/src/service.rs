//! HTTP/JSON API over the engine, plus static UI assets under `/ui/`.
//!
//! Reads run concurrently against an `Arc<Snapshot>`; a reload swaps the
//! pointer, so requests already holding the old snapshot finish on it.
//! Sessions pin the snapshot they started with and are serialized by a
//! per-session lock.

use std::collections::{BTreeSet, HashMap};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use recoin_core::index::{format_fixed2, format_percent};
use recoin_core::session::{Edit, ReportRecord, DEFAULT_LIMIT_SECS};
use recoin_core::snapshot::Snapshot;
use recoin_core::stats::condition_summary;
use recoin_core::{
    completeness, CompletenessReport, Condition, CoreError, EditSession, ItemId, PropertyId,
    Recommendation, SelfReport, TaskResult, UiVariant, WhatIfQuery, DEFAULT_LIMIT,
};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use crate::error::Error;
use crate::session_log::{self, report_rows, to_rfc3339, SessionEvent, SessionLog, CSV_FILE};
use crate::snapshot_file::read_snapshot;

/// Milliseconds since the Unix epoch.
pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub bind: IpAddr,
    pub port: u16,
    pub data_dir: PathBuf,
    pub index_path: PathBuf,
    pub default_condition: Condition,
    /// Allowed CORS origins; empty disables CORS headers.
    pub cors_allowlist: Vec<String>,
    /// Directory served under `/ui/`.
    pub ui_dir: Option<PathBuf>,
}

impl ApiConfig {
    pub fn new(index_path: impl Into<PathBuf>, data_dir: impl Into<PathBuf>) -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            data_dir: data_dir.into(),
            index_path: index_path.into(),
            default_condition: Condition::C4,
            cors_allowlist: Vec::new(),
            ui_dir: None,
        }
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.port == 0 {
            return Err(CoreError::Validation("port must be in 1..=65535".into()).into());
        }
        for origin in &self.cors_allowlist {
            HeaderValue::from_str(origin)
                .map_err(|_| CoreError::Validation(format!("bad CORS origin {origin:?}")))?;
        }
        Ok(())
    }
}

struct Slot {
    session: EditSession,
    snapshot: Arc<Snapshot>,
}

pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    index_path: PathBuf,
    default_condition: Condition,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Slot>>>>,
    log: SessionLog,
    csv_path: PathBuf,
    clock: Clock,
}

impl AppState {
    /// Opens the session log in `config.data_dir` (which must be writable).
    pub fn new(config: &ApiConfig, snapshot: Snapshot, clock: Clock) -> Result<Self, Error> {
        config.validate()?;
        let log = SessionLog::open(&config.data_dir)?;
        Ok(Self {
            snapshot: RwLock::new(Arc::new(snapshot)),
            index_path: config.index_path.clone(),
            default_condition: config.default_condition,
            sessions: Mutex::new(HashMap::new()),
            log,
            csv_path: config.data_dir.join(CSV_FILE),
            clock,
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn fingerprint(&self) -> String {
        self.snapshot().fingerprint().to_owned()
    }

    fn slot(&self, sid: &str) -> Result<Arc<tokio::sync::Mutex<Slot>>, ApiError> {
        self.sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(sid)
            .cloned()
            .ok_or_else(|| ApiError::from(CoreError::NotFound(format!("session {sid}"))))
    }
}

pub fn router(state: Arc<AppState>, config: &ApiConfig) -> Router {
    let mut app = Router::new()
        .route("/api/entity/{id}", get(get_entity))
        .route("/api/entity/{id}/completeness", get(get_completeness))
        .route("/api/entity/{id}/recommendations", get(get_recommendations))
        .route("/api/entity/{id}/whatif", post(post_whatif))
        .route("/api/session", post(post_session))
        .route("/api/session/{sid}/edit", post(post_edit))
        .route("/api/session/{sid}/finalize", post(post_finalize))
        .route("/api/session/{sid}/report", post(post_report))
        .route("/api/analytics/summary", get(get_summary))
        .route("/api/index/reload", post(post_reload));
    if let Some(dir) = &config.ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    if !config.cors_allowlist.is_empty() {
        let origins: Vec<HeaderValue> = config
            .cors_allowlist
            .iter()
            .filter_map(|o| HeaderValue::from_str(o).ok())
            .collect();
        app = app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
                .allow_headers([axum::http::header::CONTENT_TYPE]),
        );
    }
    app.with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(config: ApiConfig, snapshot: Snapshot) -> Result<(), Error> {
    let state = Arc::new(AppState::new(&config, snapshot, Arc::new(session_log::now_ms))?);
    let app = router(state, &config);
    let listener = tokio::net::TcpListener::bind(config.addr()).await?;
    tracing::info!(addr = %config.addr(), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.kind,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let (status, kind) = match &e {
            CoreError::Parse(_) | CoreError::Validation(_) | CoreError::Undefined(_) => {
                (StatusCode::BAD_REQUEST, "validation")
            }
            CoreError::NotFound(_) | CoreError::UnknownClass(_) => (StatusCode::NOT_FOUND, "not_found"),
            CoreError::State(_) => (StatusCode::CONFLICT, "state"),
            CoreError::IndexMismatch(..) => (StatusCode::CONFLICT, "index_mismatch"),
            CoreError::TimeLimit(_) => (StatusCode::GONE, "time_limit"),
            CoreError::Snapshot(_) => (StatusCode::UNPROCESSABLE_ENTITY, "snapshot"),
        };
        Self {
            status,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Core(core) => core.into(),
            other => Self {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                kind: "internal",
                message: other.to_string(),
            },
        }
    }
}

fn bad_request(message: String) -> ApiError {
    ApiError {
        status: StatusCode::BAD_REQUEST,
        kind: "validation",
        message,
    }
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v).map_err(|e| bad_request(e.body_text()))
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub property: PropertyId,
    pub class: ItemId,
    pub count: u64,
    pub class_size: u64,
    pub relevance: f64,
    pub relevance_display: String,
}

impl From<&Recommendation> for RecommendationView {
    fn from(r: &Recommendation) -> Self {
        Self {
            property: r.property.clone(),
            class: r.class.clone(),
            count: r.count,
            class_size: r.class_size,
            relevance: r.relevance,
            relevance_display: r.relevance_display(),
        }
    }
}

fn views(recs: &[Recommendation]) -> Vec<RecommendationView> {
    recs.iter().map(RecommendationView::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportView {
    pub item: ItemId,
    pub level: u8,
    pub level_label: String,
    pub score: f64,
    pub score_display: String,
    pub avg_top5_missing: f64,
    pub avg_top5_missing_display: String,
    pub missing: Vec<RecommendationView>,
    pub displayed: Vec<RecommendationView>,
    pub deselected: BTreeSet<PropertyId>,
    pub classes_used: BTreeSet<ItemId>,
    pub via_occupation: bool,
    pub index_fingerprint: String,
}

impl From<&CompletenessReport> for ReportView {
    fn from(r: &CompletenessReport) -> Self {
        Self {
            item: r.item.clone(),
            level: r.level,
            level_label: r.level_label.clone(),
            score: r.score,
            score_display: format_percent(r.score),
            avg_top5_missing: r.avg_top5_missing,
            avg_top5_missing_display: format_percent(r.avg_top5_missing),
            missing: views(&r.missing),
            displayed: views(&r.displayed),
            deselected: r.deselected.clone(),
            classes_used: r.classes_used.clone(),
            via_occupation: r.via_occupation,
            index_fingerprint: r.index_fingerprint.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct EntityView<'a> {
    id: &'a ItemId,
    claims: &'a std::collections::BTreeMap<PropertyId, BTreeSet<String>>,
    classes: BTreeSet<ItemId>,
    via_occupation: bool,
    index_fingerprint: &'a str,
}

fn lookup<'a>(snap: &'a Snapshot, id: &str) -> Result<&'a recoin_core::Entity, ApiError> {
    snap.store
        .get(id)
        .ok_or_else(|| CoreError::NotFound(format!("item {id}")).into())
}

async fn get_entity(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let snap = state.snapshot();
    match lookup(&snap, &id) {
        Ok(entity) => {
            let assignment = snap.index.class_of(entity);
            Json(EntityView {
                id: entity.id(),
                claims: entity.claims(),
                classes: assignment.classes,
                via_occupation: assignment.via_occupation,
                index_fingerprint: snap.fingerprint(),
            })
            .into_response()
        }
        Err(e) => e.into_response(),
    }
}

fn report_for(snap: &Snapshot, id: &str, query: &WhatIfQuery) -> Result<ReportView, ApiError> {
    let entity = lookup(snap, id)?;
    Ok(ReportView::from(&completeness(entity, &snap.index, query)?))
}

async fn get_completeness(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<ReportView> {
    report_for(&state.snapshot(), &id, &WhatIfQuery::default()).map(Json)
}

async fn post_whatif(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<WhatIfQuery>, JsonRejection>,
) -> ApiResult<ReportView> {
    let query = json_body(body)?;
    report_for(&state.snapshot(), &id, &query).map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendationParams {
    pub limit: Option<usize>,
    pub min_count: Option<u64>,
    pub max_count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationsView {
    pub item: ItemId,
    pub recommendations: Vec<RecommendationView>,
    pub index_fingerprint: String,
}

/// Missing properties in rank order, filtered by the occurrence range and
/// then capped at `limit`.
async fn get_recommendations(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    params: Result<Query<RecommendationParams>, QueryRejection>,
) -> ApiResult<RecommendationsView> {
    let Query(params) = params.map_err(|e| bad_request(e.body_text()))?;
    let query = WhatIfQuery {
        deselected: BTreeSet::new(),
        min_count: params.min_count,
        max_count: params.max_count,
    };
    let snap = state.snapshot();
    let entity = lookup(&snap, &id)?;
    let report = completeness(entity, &snap.index, &query)?;
    let limit = params.limit.unwrap_or(DEFAULT_LIMIT);
    Ok(Json(RecommendationsView {
        item: report.item.clone(),
        recommendations: report.displayed.iter().take(limit).map(Into::into).collect(),
        index_fingerprint: report.index_fingerprint,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartRequest {
    pub condition: Option<Condition>,
    pub item_id: String,
    pub limit_secs: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub condition: Condition,
    pub ui_variant: UiVariant,
    pub onboarding_mentions_recoin: bool,
    pub item: ItemId,
    pub started_at: String,
    pub deadline: String,
    pub limit_secs: u64,
    pub remaining_ms: i64,
    pub before: ReportView,
    pub index_fingerprint: String,
}

async fn post_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<StartRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let req = json_body(body)?;
    let limit_secs = req.limit_secs.unwrap_or(DEFAULT_LIMIT_SECS);
    if limit_secs == 0 {
        return Err(bad_request("limit_secs must be positive".into()));
    }
    let condition = req.condition.unwrap_or(state.default_condition);
    let snapshot = state.snapshot();
    let now = (state.clock)();
    let id = uuid::Uuid::new_v4().to_string();
    let session = EditSession::start(&id, condition, &req.item_id, &snapshot.store, &snapshot.index, now, limit_secs)?;
    state.log.append(&SessionEvent::Start {
        session_id: id.clone(),
        condition,
        item: session.item.clone(),
        started_at: to_rfc3339(now),
        limit_secs,
        index_fingerprint: snapshot.fingerprint().to_owned(),
    })?;
    let view = SessionView {
        session_id: id.clone(),
        condition,
        ui_variant: condition.ui_variant(),
        onboarding_mentions_recoin: condition.onboarding_mentions_recoin(),
        item: session.item.clone(),
        started_at: to_rfc3339(now),
        deadline: to_rfc3339(session.deadline_ms()),
        limit_secs,
        remaining_ms: session.remaining_ms(now),
        before: ReportView::from(&session.before_report),
        index_fingerprint: snapshot.fingerprint().to_owned(),
    };
    let slot = Slot { session, snapshot };
    state
        .sessions
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .insert(id, Arc::new(tokio::sync::Mutex::new(slot)));
    Ok((StatusCode::CREATED, Json(view)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub property: String,
    pub value: String,
    #[serde(default)]
    pub via_recoin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditView {
    pub property: PropertyId,
    pub value: String,
    pub via_recoin: bool,
    pub at: String,
}

impl From<&Edit> for EditView {
    fn from(e: &Edit) -> Self {
        Self {
            property: e.property.clone(),
            value: e.value.clone(),
            via_recoin: e.via_recoin,
            at: to_rfc3339(e.at_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditResponse {
    pub session_id: String,
    pub edit: EditView,
    pub edit_count: u32,
    pub usage: u32,
    pub remaining_ms: i64,
    /// Completeness of the working copy after this edit.
    pub current: ReportView,
}

async fn post_edit(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
    body: Result<Json<EditRequest>, JsonRejection>,
) -> ApiResult<EditResponse> {
    let req = json_body(body)?;
    let slot = state.slot(&sid)?;
    let mut slot = slot.lock().await;
    let now = (state.clock)();
    let edit = slot
        .session
        .apply_edit(&req.property, &req.value, req.via_recoin, now)?
        .clone();
    state.log.append(&SessionEvent::Edit {
        session_id: sid.clone(),
        property: edit.property.clone(),
        value: edit.value.clone(),
        via_recoin: edit.via_recoin,
        at: to_rfc3339(edit.at_ms),
    })?;
    let current = completeness(&slot.session.working, &slot.snapshot.index, &WhatIfQuery::default())?;
    Ok(Json(EditResponse {
        session_id: sid,
        edit: EditView::from(&edit),
        edit_count: slot.session.edits.len() as u32,
        usage: slot.session.usage(),
        remaining_ms: slot.session.remaining_ms(now),
        current: ReportView::from(&current),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultView {
    pub relevance: f64,
    pub relevance_display: String,
    pub usage: u32,
    pub grade: String,
    pub edit_count: u32,
}

impl From<&TaskResult> for ResultView {
    fn from(r: &TaskResult) -> Self {
        Self {
            relevance: r.relevance,
            relevance_display: format_fixed2(r.relevance),
            usage: r.usage,
            grade: r.grade.letter.as_str().to_owned(),
            edit_count: r.edit_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub session_id: String,
    pub result: ResultView,
    pub before: ReportView,
    pub after: ReportView,
    pub finalized_at: String,
    pub index_fingerprint: String,
}

async fn post_finalize(State(state): State<Arc<AppState>>, Path(sid): Path<String>) -> ApiResult<FinalizeResponse> {
    let slot = state.slot(&sid)?;
    let mut slot = slot.lock().await;
    let now = (state.clock)();
    let snapshot = slot.snapshot.clone();
    let result = slot.session.finalize(&snapshot.index)?;
    state.log.append(&SessionEvent::Finalize {
        session_id: sid.clone(),
        at: to_rfc3339(now),
        result,
    })?;
    let after = completeness(&slot.session.working, &snapshot.index, &WhatIfQuery::default())?;
    Ok(Json(FinalizeResponse {
        session_id: sid,
        result: ResultView::from(&result),
        before: ReportView::from(&slot.session.before_report),
        after: ReportView::from(&after),
        finalized_at: to_rfc3339(now),
        index_fingerprint: snapshot.fingerprint().to_owned(),
    }))
}

async fn post_report(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
    body: Result<Json<SelfReport>, JsonRejection>,
) -> ApiResult<ReportRecord> {
    let report = json_body(body)?;
    let slot = state.slot(&sid)?;
    let mut slot = slot.lock().await;
    let record = slot.session.record_self_report(report)?;
    state.log.append(&SessionEvent::Report {
        session_id: sid,
        at: to_rfc3339((state.clock)()),
        record: record.clone(),
    })?;
    let rows = report_rows(&state.log.events()?);
    session_log::write_csv_file(&state.csv_path, &rows)?;
    Ok(Json(record))
}

#[derive(Debug, Serialize)]
struct SummaryView {
    sessions: usize,
    conditions: Vec<recoin_core::stats::ConditionSummary>,
    index_fingerprint: String,
}

async fn get_summary(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let rows = report_rows(&state.log.events()?);
    Ok(Json(SummaryView {
        sessions: rows.len(),
        conditions: condition_summary(&rows),
        index_fingerprint: state.fingerprint(),
    })
    .into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReloadRequest {
    /// Defaults to the configured snapshot path.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReloadResponse {
    pub index_fingerprint: String,
    pub previous_fingerprint: String,
    pub no_op: bool,
}

async fn post_reload(
    State(state): State<Arc<AppState>>,
    body: Option<Json<ReloadRequest>>,
) -> ApiResult<ReloadResponse> {
    let path = body
        .and_then(|Json(r)| r.path)
        .unwrap_or_else(|| state.index_path.clone());
    let loaded = tokio::task::spawn_blocking(move || read_snapshot(&path))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            kind: "internal",
            message: e.to_string(),
        })?;
    let snapshot = loaded.map_err(|e| match e {
        Error::Core(core) => ApiError::from(core),
        other => ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            kind: "snapshot",
            message: other.to_string(),
        },
    })?;
    let mut current = state.snapshot.write().unwrap_or_else(|p| p.into_inner());
    let previous = current.fingerprint().to_owned();
    let no_op = previous == snapshot.fingerprint();
    if !no_op {
        tracing::info!(from = %previous, to = %snapshot.fingerprint(), "index reloaded");
        *current = Arc::new(snapshot);
    }
    Ok(Json(ReloadResponse {
        index_fingerprint: current.fingerprint().to_owned(),
        previous_fingerprint: previous,
        no_op,
    }))
}
