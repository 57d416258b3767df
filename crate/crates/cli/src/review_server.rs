//! HTTP front end over a review package.
//!
//! ```text
//! GET  /queue                   items in review order with completion flags
//! GET  /tile/{id}               image (base64 PNG), predictions, stored correction
//! GET  /tile/{id}/image.png     raw PNG
//! POST /tile/{id}/corrections   {"boxes": [...], "base_revision": n}
//! POST /merge                   {"timestamp": "..."} (optional body)
//! ```
//!
//! Errors are JSON `{"error": kind, "message": ...}`: 404 for unknown items,
//! 409 when `base_revision` is stale or the merge conflicts with the dataset,
//! 400 for malformed or invalid corrections.

use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use hct_core::dataset::active::{DatasetManifest, MergeEvent};
use hct_core::dataset::review::{QueueEntry, ReviewError, ReviewStore};
use hct_core::dataset::{AnnotatedBox, AnnotationRecord, TileRef};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub struct ReviewState {
    store: Mutex<ReviewStore>,
    manifest_path: PathBuf,
}

impl ReviewState {
    pub fn new(store: ReviewStore, manifest_path: PathBuf) -> Arc<Self> {
        Arc::new(ReviewState { store: Mutex::new(store), manifest_path })
    }

    fn store(&self) -> MutexGuard<'_, ReviewStore> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueResponse {
    pub total: usize,
    pub completed: usize,
    pub items: Vec<QueueEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileResponse {
    pub id: String,
    pub tile: TileRef,
    pub image_png_base64: String,
    pub predictions: Vec<AnnotatedBox>,
    pub correction: Option<AnnotationRecord>,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub boxes: Vec<AnnotatedBox>,
    #[serde(default)]
    pub base_revision: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResponse {
    pub id: String,
    pub revision: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MergeRequest {
    #[serde(default)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeResponse {
    pub previous_version: u64,
    pub version: u64,
    pub event: Option<MergeEvent>,
}

pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl ToString) -> Self {
        ApiError { status, body: json!({ "error": kind, "message": message.to_string() }) }
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        match &e {
            ReviewError::UnknownItem(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown-item", &e),
            ReviewError::Conflict { current, .. } => {
                let mut err = ApiError::new(StatusCode::CONFLICT, "conflict", &e);
                err.body["current_revision"] = json!(current);
                err
            }
            ReviewError::InvalidCorrection(_) | ReviewError::Annotation(_) => {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid-correction", &e)
            }
            ReviewError::Merge(_) => ApiError::new(StatusCode::CONFLICT, "merge-conflict", &e),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", &e),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad-request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn queue(State(state): State<Arc<ReviewState>>) -> Json<QueueResponse> {
    let items = state.store().queue();
    Json(QueueResponse { total: items.len(), completed: items.iter().filter(|i| i.completed).count(), items })
}

async fn tile(State(state): State<Arc<ReviewState>>, Path(id): Path<String>) -> ApiResult<TileResponse> {
    let store = state.store();
    let png = store.image_png(&id)?;
    let predictions = store.predictions(&id)?;
    let correction = store.correction(&id)?.cloned();
    Ok(Json(TileResponse {
        id,
        tile: predictions.tile,
        image_png_base64: STANDARD.encode(png),
        predictions: predictions.boxes,
        revision: correction.as_ref().map_or(0, |c| c.revision),
        correction: correction.map(|c| c.record),
    }))
}

async fn tile_image(State(state): State<Arc<ReviewState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let png = state.store().image_png(&id)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn submit(
    State(state): State<Arc<ReviewState>>,
    Path(id): Path<String>,
    body: Result<Json<CorrectionRequest>, JsonRejection>,
) -> ApiResult<CorrectionResponse> {
    // resolve 404 before complaining about the body
    state.store().correction(&id)?;
    let Json(req) = body?;
    let revision = state.store().submit(&id, req.boxes, req.base_revision)?;
    Ok(Json(CorrectionResponse { id, revision }))
}

fn now_timestamp() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    format!("unix:{secs}")
}

async fn merge(State(state): State<Arc<ReviewState>>, body: Bytes) -> ApiResult<MergeResponse> {
    let req: MergeRequest = if body.iter().all(u8::is_ascii_whitespace) {
        MergeRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad-request", e))?
    };
    let internal = |e: &dyn std::fmt::Display| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e);
    let mut store = state.store();
    let manifest = DatasetManifest::load(&state.manifest_path).map_err(|e| internal(&e))?;
    let timestamp = req.timestamp.unwrap_or_else(now_timestamp);
    let (merged, event) = store.merge_into(&manifest, &timestamp)?;
    merged.save(&state.manifest_path).map_err(|e| internal(&e))?;
    Ok(Json(MergeResponse { previous_version: manifest.version, version: merged.version, event }))
}

pub fn router(state: Arc<ReviewState>) -> Router {
    Router::new()
        .route("/queue", get(queue))
        .route("/tile/{id}", get(tile))
        .route("/tile/{id}/image.png", get(tile_image))
        .route("/tile/{id}/corrections", post(submit))
        .route("/merge", post(merge))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<ReviewState>) -> std::io::Result<()> {
    log::info!("review service on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
