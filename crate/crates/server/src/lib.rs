//! Review service: queue, decisions, progress and export over HTTP.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use ali_core::adjudication::{Adjudication, AdjudicationError, DecisionInput, Progress, RetentionRule, TermTally};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

/// Shared state. Every write goes through the one mutex, so the decision
/// log has a single writer.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Mutex<Adjudication>>,
}

impl AppState {
    pub fn new(adjudication: Adjudication) -> Self {
        AppState {
            inner: Arc::new(Mutex::new(adjudication)),
        }
    }

    pub fn with<T>(&self, f: impl FnOnce(&mut Adjudication) -> T) -> T {
        let mut guard = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut guard)
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<AdjudicationError> for ApiError {
    fn from(e: AdjudicationError) -> Self {
        let status = match &e {
            AdjudicationError::UnknownTerm(_) => StatusCode::NOT_FOUND,
            AdjudicationError::InvalidVerdict(_)
            | AdjudicationError::EmptyReviewer
            | AdjudicationError::UnknownRule(_) => StatusCode::BAD_REQUEST,
            AdjudicationError::CorruptLog { .. } | AdjudicationError::Io(..) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub tally: TermTally,
    pub progress: Progress,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    rule: Option<String>,
}

async fn queue(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.with(|a| a.queue()))
}

async fn term(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    s.with(|a| a.item(&id))
        .map(Json)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown term {id}")))
}

async fn decide(State(s): State<AppState>, Json(input): Json<DecisionInput>) -> Result<impl IntoResponse, ApiError> {
    // The log is fsynced inside submit; keep that off the async workers.
    let result = tokio::task::spawn_blocking(move || {
        s.with(|a| {
            let tally = a.submit(input)?;
            Ok::<_, AdjudicationError>(DecisionResponse {
                tally,
                progress: a.progress(),
            })
        })
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(result))
}

async fn progress(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.with(|a| a.progress()))
}

async fn export(State(s): State<AppState>, Query(q): Query<ExportQuery>) -> Result<Response, ApiError> {
    let rule: RetentionRule = match q.rule.as_deref() {
        Some(r) => r.parse()?,
        None => RetentionRule::default(),
    };
    let csv = s.with(|a| a.export(rule).to_csv_string());
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"llm_context_clinician.csv\""),
        ],
        csv,
    )
        .into_response())
}

const PLACEHOLDER: &str = "<!doctype html><html><head><meta charset=\"utf-8\"><title>Term review</title></head>\
<body><h1>Term review API</h1><ul>\
<li><a href=\"/api/queue\">GET /api/queue</a></li>\
<li>GET /api/terms/{id}</li>\
<li>POST /api/decisions</li>\
<li><a href=\"/api/progress\">GET /api/progress</a></li>\
<li><a href=\"/api/export?rule=any_approve\">GET /api/export?rule=any_approve</a></li>\
</ul></body></html>";

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/queue", get(queue))
        .route("/api/terms/{id}", get(term))
        .route("/api/decisions", axum::routing::post(decide))
        .route("/api/progress", get(progress))
        .route("/api/export", get(export))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
