//! Annotation HTTP API.
//!
//! Records are stored as `<store>/<image id>.json`. Writes to one image id
//! are serialized; the last write wins and its version number is echoed.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use locint_core::edgemap::snap_polyline;
use locint_core::formats::{check_version, load_image, read_json, write_json};
use locint_core::geometry::Vec2;
use locint_core::{compute_edge_map, AnnotationRecord, EdgeParams, Error, ModelSchema};

use crate::commands::images_in;
use crate::CliResult;

pub const VERSION_HEADER: &str = "x-annotation-version";

pub struct ServerState {
    schema: ModelSchema,
    edge_params: EdgeParams,
    images: BTreeMap<String, PathBuf>,
    store: PathBuf,
    versions: Mutex<HashMap<String, Arc<Mutex<u64>>>>,
}

impl ServerState {
    pub fn open(schema: ModelSchema, images: &Path, store: &Path) -> CliResult<Arc<Self>> {
        std::fs::create_dir_all(store).map_err(|e| Error::Io(format!("{}: {e}", store.display())))?;
        Ok(Arc::new(Self {
            schema,
            edge_params: EdgeParams::default(),
            images: images_in(images)?.into_iter().collect(),
            store: store.to_path_buf(),
            versions: Mutex::new(HashMap::new()),
        }))
    }

    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    fn record_path(&self, id: &str) -> PathBuf {
        self.store.join(format!("{id}.json"))
    }

    /// Per-image write slot; a record already on disk counts as version 1.
    fn slot(&self, id: &str) -> Arc<Mutex<u64>> {
        let mut map = self.versions.lock().unwrap_or_else(|p| p.into_inner());
        map.entry(id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(u64::from(self.record_path(id).exists()))))
            .clone()
    }

    fn image_path(&self, id: &str) -> Result<&PathBuf, ApiError> {
        self.images.get(id).ok_or_else(|| ApiError::not_found("unknown_image", format!("no image `{id}`")))
    }
}

pub fn router(state: Arc<ServerState>) -> Router {
    Router::new()
        .route("/api/schema", get(get_schema))
        .route("/api/images", get(get_images))
        .route("/api/image/{id}", get(get_image))
        .route("/api/refine", post(post_refine))
        .route("/api/annotation", post(post_annotation))
        .route("/api/annotation/{id}", get(get_annotation))
        .with_state(state)
}

/// Error body: `{ error, detail }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub error: String,
    pub detail: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ApiErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, detail: impl Into<String>) -> Self {
        Self { status, body: ApiErrorBody { error: error.into(), detail: detail.into() } }
    }

    fn not_found(error: &str, detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, error, detail)
    }

    fn bad_request(error: &str, detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error, detail)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string()),
            Error::FormatVersion { .. } => Self::bad_request("format_version", e.to_string()),
            Error::Parse(_) => Self::bad_request("malformed", e.to_string()),
            _ => Self::bad_request("invalid", e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request("malformed", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

async fn get_schema(State(s): State<Arc<ServerState>>) -> Json<ModelSchema> {
    Json(s.schema.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingImages {
    pub pending: Vec<String>,
}

async fn get_images(State(s): State<Arc<ServerState>>) -> Json<PendingImages> {
    let pending = s.images.keys().filter(|id| !s.record_path(id).exists()).cloned().collect();
    Json(PendingImages { pending })
}

async fn get_image(State(s): State<Arc<ServerState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let path = s.image_path(&id)?;
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

/// Polyline in normalized image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRequest {
    pub image_id: String,
    pub polyline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResponse {
    pub polyline: Vec<[f64; 2]>,
    pub snapped: bool,
}

async fn post_refine(
    State(s): State<Arc<ServerState>>,
    body: Result<Json<RefineRequest>, JsonRejection>,
) -> Result<Json<RefineResponse>, ApiError> {
    let Json(req) = body?;
    if req.polyline.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(ApiError::bad_request("invalid", "polyline coordinates must lie in [0,1]"));
    }
    let img = load_image(s.image_path(&req.image_id)?, &req.image_id)?;
    let edges = compute_edge_map(&img, &s.edge_params)?;
    let px: Vec<Vec2> = req.polyline.iter().map(|&[x, y]| img.to_pixel(Vec2::new(x, y))).collect();
    let (refined, snapped) = snap_polyline(&edges, &px)?;
    let polyline = refined
        .iter()
        .map(|p| {
            let q = img.to_normalized(p.x, p.y);
            [q.x.clamp(0.0, 1.0), q.y.clamp(0.0, 1.0)]
        })
        .collect();
    Ok(Json(RefineResponse { polyline, snapped }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaveResponse {
    pub ok: bool,
    pub version: u64,
}

async fn post_annotation(
    State(s): State<Arc<ServerState>>,
    body: Result<Json<AnnotationRecord>, JsonRejection>,
) -> Result<Json<SaveResponse>, ApiError> {
    let Json(record) = body?;
    check_version(&record.format_version)?;
    s.image_path(&record.image_id)?;
    if record.schema_name != s.schema.class_name {
        return Err(ApiError::bad_request(
            "invalid",
            format!("record schema `{}` is not the served schema `{}`", record.schema_name, s.schema.class_name),
        ));
    }
    record.validate(&s.schema)?;
    let slot = s.slot(&record.image_id);
    let mut version = slot.lock().unwrap_or_else(|p| p.into_inner());
    write_json(&s.record_path(&record.image_id), &record)?;
    *version += 1;
    Ok(Json(SaveResponse { ok: true, version: *version }))
}

async fn get_annotation(State(s): State<Arc<ServerState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    s.image_path(&id)?;
    let slot = s.slot(&id);
    let version = slot.lock().unwrap_or_else(|p| p.into_inner());
    let path = s.record_path(&id);
    if !path.exists() {
        return Err(ApiError::not_found("not_found", format!("no annotation for `{id}`")));
    }
    let record: AnnotationRecord = read_json(&path)?;
    let mut resp = Json(record).into_response();
    resp.headers_mut().insert(VERSION_HEADER, HeaderValue::from(*version));
    Ok(resp)
}
