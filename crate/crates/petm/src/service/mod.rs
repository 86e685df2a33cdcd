//! Annotation service: session/phase management, marking and skipping,
//! live MRK correction, yes/no review and exports over HTTP+JSON.

mod error;
pub mod state;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use anyhow::{Context, Result};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Path as UrlPath, Request, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::request::Parts;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use petm_core::agreement::{agreement_report, AgreementReport};
use petm_core::prompt::{PromptTemplate, TaskKind};
use petm_core::record::{MarkingVector, SkipReason, Split, TripleRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub use error::ServiceError;
pub use state::{EventLog, NextResponse, Phase, ReviewTarget, SessionSummary, Store, LIVE_CONDITION};

use crate::config::ExperimentConfig;
use crate::experiment::{build_gateway, read_outputs, run_item, ReviewAggregate, ShotPlanner};
use crate::gateway::Gateway;
use crate::store::{read_records, to_line};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// PE-TM with the items to annotate, in assignment order.
    pub items: PathBuf,
    /// Event log and request log location.
    pub data_dir: PathBuf,
    pub trial_size: usize,
    pub block_size: usize,
    /// Enables live correction and offline-output review.
    pub experiment: Option<ExperimentConfig>,
    pub static_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(items: impl Into<PathBuf>, data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig { items: items.into(), data_dir: data_dir.into(), trial_size: 50, block_size: 500, experiment: None, static_dir: None }
    }
}

/// Retrieval + MRK prompt + gateway for freshly marked items.
pub struct LiveCorrector {
    planner: ShotPlanner,
    gateway: Gateway,
    template: PromptTemplate,
}

impl LiveCorrector {
    /// Demonstrations come from the config store's pool records (all usable
    /// records when none are labeled pool).
    pub fn from_config(config: &ExperimentConfig, items: &[TripleRecord], log: Option<&Path>) -> Result<Self> {
        let records = read_records(&config.store)?;
        let labeled: Vec<TripleRecord> = records.iter().filter(|r| r.split == Split::Pool).cloned().collect();
        let pool = if labeled.is_empty() { records.iter().filter(|r| r.is_usable()).cloned().collect() } else { labeled };
        let planner = ShotPlanner::new(config, &pool)?;
        let gateway = build_gateway(config, items, log)?;
        Ok(LiveCorrector { planner, gateway, template: config.template.clone() })
    }

    pub fn correct(&self, record: &TripleRecord) -> Result<String, String> {
        let out = run_item(TaskKind::Mrk, record, &self.planner, &self.template, &self.gateway).map_err(|e| e.to_string())?;
        if out.failed {
            return Err(out.error.unwrap_or_else(|| "correction failed".into()));
        }
        Ok(out.hypothesis)
    }
}

pub struct AppState {
    store: Mutex<Store>,
    live: Option<Arc<LiveCorrector>>,
}

impl AppState {
    pub fn new(store: Store, live: Option<LiveCorrector>) -> Arc<Self> {
        Arc::new(AppState { store: Mutex::new(store), live: live.map(Arc::new) })
    }

    fn store(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Loads items, replays the event log and prepares live correction.
pub fn load_state(config: &ServiceConfig) -> Result<Arc<AppState>> {
    let items = read_records(&config.items)?;
    let (log, events) = EventLog::open(&config.data_dir.join("events.jsonl")).context("opening the event log")?;
    let mut store = Store::new(items.clone(), config.trial_size, config.block_size).with_log(log, events)?;
    let mut live = None;
    if let Some(exp) = &config.experiment {
        for &task in &exp.tasks {
            let path = exp.output_path(task);
            if path.exists() {
                for o in read_outputs(&path)?.into_iter().filter(|o| !o.failed) {
                    store.seed_correction(task.slug(), &o.item_id, &o.item_id, &o.hypothesis);
                }
            }
        }
        live = Some(LiveCorrector::from_config(exp, &items, Some(&config.data_dir.join("requests.log.jsonl")))?);
    }
    Ok(AppState::new(store, live))
}

/// JSON body whose rejections are reported as `{code, message}`.
pub struct ApiJson<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for ApiJson<T> {
    type Rejection = ServiceError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| ApiJson(v))
            .map_err(|e: JsonRejection| ServiceError::InvalidRequest(e.body_text()))
    }
}

pub struct ApiQuery<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequestParts<S> for ApiQuery<T> {
    type Rejection = ServiceError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        axum::extract::Query::<T>::from_request_parts(parts, state)
            .await
            .map(|q| ApiQuery(q.0))
            .map_err(|e: QueryRejection| ServiceError::InvalidRequest(e.body_text()))
    }
}

#[derive(Deserialize)]
pub struct CreateSession {
    pub annotator_id: String,
    pub phase: Phase,
}

#[derive(Deserialize)]
pub struct MarksBody {
    pub session_id: String,
    pub marks: MarkingVector,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarksResponse {
    pub stored: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Deserialize)]
pub struct SkipBody {
    pub session_id: String,
    pub reason: SkipReason,
}

fn live_condition() -> String {
    LIVE_CONDITION.into()
}

#[derive(Deserialize)]
pub struct ReviewBody {
    pub reviewer_id: String,
    pub correct: bool,
    #[serde(default = "live_condition")]
    pub condition: String,
}

#[derive(Serialize)]
struct Stored {
    stored: bool,
}

#[derive(Deserialize)]
pub struct PhaseQuery {
    pub phase: Option<Phase>,
}

#[derive(Deserialize)]
pub struct ExportQuery {
    pub phase: Option<Phase>,
    pub annotator: Option<String>,
}

#[derive(Deserialize)]
pub struct ReviewQuery {
    pub reviewer_id: String,
    #[serde(default = "live_condition")]
    pub condition: String,
}

type Shared = State<Arc<AppState>>;

async fn create_session(State(app): Shared, ApiJson(body): ApiJson<CreateSession>) -> Result<Json<SessionSummary>, ServiceError> {
    app.store().create_session(&body.annotator_id, body.phase).map(Json)
}

async fn get_session(State(app): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<SessionSummary>, ServiceError> {
    app.store().session(&id).map(|s| Json(s.summary()))
}

async fn next_item(State(app): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<NextResponse>, ServiceError> {
    app.store().next_item(&id).map(Json)
}

async fn submit_marks(
    State(app): Shared,
    UrlPath(item_id): UrlPath<String>,
    ApiJson(body): ApiJson<MarksBody>,
) -> Result<Json<MarksResponse>, ServiceError> {
    let record = app.store().submit_marks(&body.session_id, &item_id, body.marks)?;
    let mut response = MarksResponse { stored: true, correction: None, warning: None };
    let Some(live) = app.live.clone() else { return Ok(Json(response)) };
    if !record.markings.as_ref().is_some_and(|m| m.has_bad()) {
        return Ok(Json(response));
    }
    let target = record.id.clone();
    let outcome = tokio::task::spawn_blocking(move || live.correct(&record)).await.unwrap_or_else(|e| Err(e.to_string()));
    match outcome {
        Ok(text) => {
            if let Err(e) = app.store().record_correction(LIVE_CONDITION, &target, &item_id, &text) {
                response.warning = Some(format!("correction not saved: {e}"));
            }
            response.correction = Some(text);
        }
        Err(e) => response.warning = Some(format!("live correction unavailable: {e}")),
    }
    Ok(Json(response))
}

async fn skip_item(
    State(app): Shared,
    UrlPath(item_id): UrlPath<String>,
    ApiJson(body): ApiJson<SkipBody>,
) -> Result<impl IntoResponse, ServiceError> {
    app.store().skip_item(&body.session_id, &item_id, body.reason)?;
    Ok(Json(Stored { stored: true }))
}

async fn submit_review(
    State(app): Shared,
    UrlPath(target): UrlPath<String>,
    ApiJson(body): ApiJson<ReviewBody>,
) -> Result<impl IntoResponse, ServiceError> {
    app.store().submit_review(&body.condition, &target, &body.reviewer_id, body.correct)?;
    Ok(Json(Stored { stored: true }))
}

async fn reviews(State(app): Shared) -> Json<Vec<ReviewAggregate>> {
    Json(app.store().review_aggregates())
}

async fn next_review(State(app): Shared, ApiQuery(q): ApiQuery<ReviewQuery>) -> Json<Option<ReviewTarget>> {
    Json(app.store().next_review(&q.condition, &q.reviewer_id))
}

async fn agreement(State(app): Shared, ApiQuery(q): ApiQuery<PhaseQuery>) -> Json<AgreementReport> {
    let records = app.store().export(Some(q.phase.unwrap_or(Phase::Trial)), None);
    Json(agreement_report(&records))
}

async fn export(State(app): Shared, ApiQuery(q): ApiQuery<ExportQuery>) -> impl IntoResponse {
    let records = app.store().export(q.phase, q.annotator.as_deref());
    let body: String = records.iter().map(|r| to_line(r) + "\n").collect();
    ([(CONTENT_TYPE, "application/x-ndjson")], body)
}

async fn not_found() -> ServiceError {
    ServiceError::UnknownEndpoint
}

pub fn router(app: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/next", get(next_item))
        .route("/items/{id}/marks", post(submit_marks))
        .route("/items/{id}/skip", post(skip_item))
        .route("/items/{id}/review", post(submit_review))
        .route("/reviews", get(reviews))
        .route("/review/next", get(next_review))
        .route("/agreement", get(agreement))
        .route("/export", get(export))
        .fallback(not_found)
        .with_state(app);
    let router = Router::new().nest("/api", api);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(config: &ServiceConfig, addr: SocketAddr) -> Result<()> {
    let app = router(load_state(config)?, config.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Serves `app` on an ephemeral local port from a background thread.
pub fn spawn_local(app: Router) -> std::io::Result<SocketAddr> {
    let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
    std::thread::spawn(move || {
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            let _ = axum::serve(listener, app).await;
        })
    });
    Ok(addr)
}
