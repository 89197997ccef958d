//! HTTP front end of the annotation store.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gazerank_core::annotation::{AnnotationStore, ChoiceSubmission, ExportFilter};
use gazerank_core::Error;
use serde::Deserialize;
use tower_http::services::{ServeDir, ServeFile};

pub type SharedStore = Arc<Mutex<AnnotationStore>>;

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, extra) = match &self.0 {
            Error::SessionNotFound(_) => (StatusCode::NOT_FOUND, serde_json::Value::Null),
            Error::Conflict(_) => (StatusCode::CONFLICT, serde_json::Value::Null),
            Error::InsufficientPairs { remaining, .. } => (StatusCode::CONFLICT, serde_json::json!(remaining)),
            Error::InvalidInput(_) => (StatusCode::BAD_REQUEST, serde_json::Value::Null),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, serde_json::Value::Null),
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
        }
        let mut body = serde_json::json!({ "error": self.0.to_string() });
        if !extra.is_null() {
            body["remaining"] = extra;
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Deserialize)]
struct CreateSession {
    respondent_id: String,
    plan_size: usize,
    #[serde(default)]
    seed: Option<u64>,
}

fn lock(store: &SharedStore) -> std::sync::MutexGuard<'_, AnnotationStore> {
    store.lock().unwrap_or_else(|p| p.into_inner())
}

async fn create_session(State(store): State<SharedStore>, Json(req): Json<CreateSession>) -> ApiResult<impl IntoResponse> {
    let session = lock(&store).create_session(&req.respondent_id, req.plan_size, req.seed)?;
    Ok((StatusCode::CREATED, Json(session.summary())))
}

async fn next_pair(State(store): State<SharedStore>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(lock(&store).next_pair(&id)?))
}

async fn submit_choice(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    Json(sub): Json<ChoiceSubmission>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(lock(&store).submit_choice(&id, sub)?))
}

async fn image(State(store): State<SharedStore>, Path(image_id): Path<String>) -> ApiResult<Response> {
    let path = lock(&store).catalog().image_path(&image_id);
    let Some(path) = path else {
        return Ok((StatusCode::NOT_FOUND, Json(serde_json::json!({ "error": "unknown image" }))).into_response());
    };
    let bytes = tokio::fs::read(&path).await.map_err(Error::from)?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], Body::from(bytes)).into_response())
}

async fn export(State(store): State<SharedStore>, Query(filter): Query<ExportFilter>) -> ApiResult<impl IntoResponse> {
    let csv = lock(&store).export_comparisons(&filter)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv))
}

const PLACEHOLDER: &str = "<!doctype html><title>gazerank</title><p>Annotation API is running; no UI directory configured.</p>";

/// API routes plus static files from `static_dir` at `/`.
pub fn router(store: SharedStore, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}/next", get(next_pair))
        .route("/api/session/{id}/choice", post(submit_choice))
        .route("/api/image/{image_id}", get(image))
        .route("/api/export.csv", get(export))
        .with_state(store);
    match static_dir {
        Some(dir) => {
            let index = dir.join("index.html");
            api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => api.route("/", get(|| async { axum::response::Html(PLACEHOLDER) })),
    }
}

pub async fn serve(store: AnnotationStore, static_dir: Option<PathBuf>, addr: &str) -> anyhow::Result<()> {
    let app = router(Arc::new(Mutex::new(store)), static_dir);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
