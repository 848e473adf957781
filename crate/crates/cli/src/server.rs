//! HTTP API. Report generation and answers read the file cache only; raw
//! records are used at startup to check entries are not stale.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use journey_core::cache::{atomic_write, hex, CacheStore};
use journey_core::config::{BackendMode, EngineConfig};
use journey_core::llm::{student_token, LlmClient};
use journey_core::model::ObjectiveGraph;
use journey_core::qa::{self, QaBackend, QaRequest, QaResponse};
use journey_core::story::{generate_report, ReportDocument, Templates};
use journey_core::{Error, ErrorCategory};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::{llm_client, narrative_backend, now};
use crate::dataset::Dataset;
use crate::error::CliError;

pub struct AppState {
    pub graph: ObjectiveGraph,
    pub config: EngineConfig,
    pub store: CacheStore,
    /// Hash of the dataset the server was started with.
    pub input_hash: String,
    pub templates: Templates,
    pub client: Option<Box<dyn LlmClient>>,
    reports: RwLock<HashMap<String, Arc<StoredReport>>>,
}

struct StoredReport {
    doc: ReportDocument,
    student: String,
}

impl AppState {
    pub fn new(
        graph: ObjectiveGraph,
        config: EngineConfig,
        input_hash: String,
        templates: Templates,
        client: Option<Box<dyn LlmClient>>,
    ) -> Self {
        AppState {
            store: CacheStore::new(&config.cache_dir),
            graph,
            config,
            input_hash,
            templates,
            client,
            reports: RwLock::new(HashMap::new()),
        }
    }

    fn reports_dir(&self) -> PathBuf {
        self.store.dir().join("reports")
    }

    /// Finds the raw id behind a report's token among the cached entries.
    fn student_for(&self, doc: &ReportDocument) -> Result<String, ApiError> {
        let index = self.store.index()?;
        index
            .entries
            .keys()
            .filter_map(|k| k.split_once('/'))
            .find(|(s, u)| *u == doc.metadata.unit_id && student_token(s) == doc.metadata.student_token)
            .map(|(s, _)| s.to_owned())
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no cache entry backs this report; run `aggregate`"))
    }

    fn lookup(&self, id: &str) -> Result<Arc<StoredReport>, ApiError> {
        if let Some(r) = self.reports.read().expect("report lock").get(id) {
            return Ok(r.clone());
        }
        let not_found = || ApiError::new(StatusCode::NOT_FOUND, format!("no report `{id}`"));
        if id.len() != 16 || !id.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(not_found());
        }
        let path = self.reports_dir().join(format!("{id}.json"));
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(not_found()),
            Err(e) => return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
        };
        let doc = ReportDocument::from_json(&text)?;
        let student = self.student_for(&doc)?;
        let stored = Arc::new(StoredReport { doc, student });
        self.reports.write().expect("report lock").insert(id.to_owned(), stored.clone());
        Ok(stored)
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
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::MissingCache { .. } | Error::StaleCache { .. } => StatusCode::CONFLICT,
            Error::UnknownUnit(_) | Error::UnknownObjective(_) => StatusCode::NOT_FOUND,
            Error::Backend(_) => StatusCode::BAD_GATEWAY,
            _ => match e.category() {
                ErrorCategory::Data | ErrorCategory::Config => StatusCode::UNPROCESSABLE_ENTITY,
                ErrorCategory::Runtime => StatusCode::INTERNAL_SERVER_ERROR,
            },
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateReport {
    pub student: String,
    pub unit: String,
    #[serde(default)]
    pub backend: Option<BackendMode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub location: String,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/reports", post(create_report))
        .route("/reports/{id}", get(get_report))
        .route("/reports/{id}/qa", post(ask))
        .with_state(state)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

fn report_id(doc: &ReportDocument) -> Result<String, Error> {
    Ok(hex(&Sha256::digest(doc.canonical_json()?.as_bytes()))[..16].to_owned())
}

fn build_report(state: &AppState, req: &CreateReport) -> Result<Created, ApiError> {
    let entry = state.store.read_fresh(&req.student, &req.unit, &state.input_hash)?;
    let backend_mode = req.backend.unwrap_or(state.config.backend);
    let client = match backend_mode {
        BackendMode::Template => None,
        BackendMode::Llm => Some(
            state
                .client
                .as_deref()
                .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no model endpoint configured"))?,
        ),
    };
    let backend = narrative_backend(&state.config, client);
    let doc = generate_report(&state.graph, &entry, &state.config, &backend, &state.templates, now())?;
    let id = report_id(&doc)?;
    let dir = state.reports_dir();
    std::fs::create_dir_all(&dir).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    atomic_write(&dir.join(format!("{id}.json")), doc.to_json()?.as_bytes())?;
    state.reports.write().expect("report lock").insert(
        id.clone(),
        Arc::new(StoredReport {
            doc,
            student: req.student.clone(),
        }),
    );
    Ok(Created {
        location: format!("/reports/{id}"),
        id,
    })
}

async fn create_report(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateReport>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let created = tokio::task::spawn_blocking(move || build_report(&state, &req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_report(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<ReportDocument>, ApiError> {
    Ok(Json(state.lookup(&id)?.doc.clone()))
}

fn answer(state: &AppState, id: &str, mut req: QaRequest) -> Result<QaResponse, ApiError> {
    let stored = state.lookup(id)?;
    let entry = state.store.read_fresh(&stored.student, &stored.doc.metadata.unit_id, &state.input_hash)?;
    req.report_id = id.to_owned();
    let backend = match (stored.doc.metadata.backend, state.client.as_deref()) {
        (BackendMode::Llm, Some(client)) => QaBackend::Llm(client),
        _ => QaBackend::Deterministic,
    };
    Ok(qa::answer(&req, &stored.doc, &entry, &state.graph, &state.config, &backend)?)
}

async fn ask(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<QaRequest>,
) -> Result<Json<QaResponse>, ApiError> {
    let resp = tokio::task::spawn_blocking(move || answer(&state, &id, req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(resp))
}

/// Loads the dataset, checks the cache, binds, and serves until killed.
pub fn serve(data: &Path, addr: &str, config: EngineConfig, templates: Templates) -> Result<(), CliError> {
    let ds = Dataset::load(data)?;
    let input_hash = ds.input_hash(&config)?;
    let store = CacheStore::open(&config.cache_dir).map_err(|e| CliError::CacheUnreadable {
        path: config.cache_dir.clone(),
        reason: e.to_string(),
    })?;
    store.index().map_err(|e| CliError::CacheUnreadable {
        path: config.cache_dir.clone(),
        reason: e.to_string(),
    })?;
    let client = llm_client(&config)?;
    let state = Arc::new(AppState::new(ds.graph, config, input_hash, templates, client));
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::Server)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| CliError::Bind {
            addr: addr.to_owned(),
            source,
        })?;
        let local = listener.local_addr().map_err(CliError::Server)?;
        eprintln!("journey: listening on http://{local}");
        axum::serve(listener, router(state)).await.map_err(CliError::Server)
    })
}
