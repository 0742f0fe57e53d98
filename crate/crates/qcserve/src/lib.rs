//! HTTP service for reviewing label alignment slice by slice and recording
//! good/bad ratings.
//!
//! Endpoints:
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/api/subjects` | JSON list |
//! | GET | `/api/subjects/{id}/slice?axis&index[&window_min&window_max]` | 8-bit PNG |
//! | GET | `/api/subjects/{id}/slice/overlay?axis&index&overlay=none\|gt\|prediction` | JSON RLE segments |
//! | POST | `/api/subjects/{id}/rating` | stored record |
//! | GET | `/api/ratings.csv` | latest-view CSV |
//!
//! Everything else is served from the static UI directory when one is configured.

pub mod slice;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use tokio::sync::OnceCell;
use tower_http::services::ServeDir;
use ulfsynth_core::curation::{write_latest_csv, FlagResult, PersistentStore, QCRecord};
use ulfsynth_core::labelharm::{load_manifest, Manifest, ManifestEntry, QcStatus};
use ulfsynth_core::volgrid::{read_header, read_labels, read_volume, LabelMap};

use crate::slice::Segment;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Core(#[from] ulfsynth_core::Error),
    #[error("cannot read flags file {path}: {message}")]
    Flags { path: PathBuf, message: String },
    #[error("server I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub manifest: PathBuf,
    pub ratings: PathBuf,
    /// `FlagResult` JSON written by `qc flag`; supplies sentinel scores.
    pub flags: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

struct ImageData {
    volume: Vec<f64>,
    dims: [usize; 3],
    window: (f64, f64),
}

#[derive(Default)]
struct SubjectCache {
    dims: OnceCell<Option<[usize; 3]>>,
    image: OnceCell<Arc<ImageData>>,
    gt: OnceCell<Arc<LabelMap>>,
    prediction: OnceCell<Arc<LabelMap>>,
}

pub struct AppState {
    manifest: Manifest,
    store: Mutex<PersistentStore>,
    cache: HashMap<String, SubjectCache>,
    sentinel: BTreeMap<String, f64>,
    static_dir: Option<PathBuf>,
}

impl AppState {
    pub fn load(config: &ServerConfig) -> Result<Self, ServeError> {
        let manifest = load_manifest(&config.manifest)?;
        let store = PersistentStore::open(&config.ratings)?;
        let sentinel = match &config.flags {
            Some(path) => load_flags(path)?,
            None => BTreeMap::new(),
        };
        Ok(Self::new(manifest, store, sentinel, config.static_dir.clone()))
    }

    pub fn new(
        manifest: Manifest,
        store: PersistentStore,
        sentinel: BTreeMap<String, f64>,
        static_dir: Option<PathBuf>,
    ) -> Self {
        let cache = manifest
            .subject_ids()
            .into_iter()
            .map(|id| (id.to_string(), SubjectCache::default()))
            .collect();
        Self {
            manifest,
            store: Mutex::new(store),
            cache,
            sentinel,
            static_dir,
        }
    }

    fn entry(&self, id: &str) -> Result<(&ManifestEntry, &SubjectCache), ApiError> {
        match (self.manifest.entry(id), self.cache.get(id)) {
            (Some(e), Some(c)) => Ok((e, c)),
            _ => Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown subject `{id}`"))),
        }
    }
}

fn load_flags(path: &std::path::Path) -> Result<BTreeMap<String, f64>, ServeError> {
    let err = |message: String| ServeError::Flags {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let flags: FlagResult = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    Ok(flags.subjects.into_iter().map(|(id, score, _)| (id, score)).collect())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/api/subjects", get(list_subjects))
        .route("/api/subjects/{id}/slice", get(slice_png))
        .route("/api/subjects/{id}/slice/overlay", get(slice_overlay))
        .route("/api/subjects/{id}/rating", post(post_rating))
        .route("/api/ratings.csv", get(ratings_csv));
    let app = match &state.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(INDEX_PLACEHOLDER) })),
    };
    app.with_state(state)
}

const INDEX_PLACEHOLDER: &str =
    "<!doctype html><title>ulfsynth QC</title><p>No UI bundle configured; the API lives under <code>/api</code>.</p>";

pub async fn serve(config: ServerConfig, addr: SocketAddr) -> Result<(), ServeError> {
    let state = Arc::new(AppState::load(&config)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, subjects = state.cache.len(), "qc server listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub subject_id: String,
    pub dims: Option<[usize; 3]>,
    pub qc_status: QcStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentinel_score: Option<f64>,
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)
}

async fn subject_dims(state: &Shared, id: &str) -> Option<[usize; 3]> {
    let (entry, cache) = state.entry(id).ok()?;
    *cache
        .dims
        .get_or_init(|| async {
            let path = state.manifest.resolve(&entry.image_path);
            let out = blocking(move || read_header(&path)).await;
            match out {
                Ok(Ok(h)) => Some(h.grid.dims()),
                Ok(Err(e)) => {
                    tracing::warn!(subject = id, error = %e, "unreadable image header");
                    None
                }
                Err(_) => None,
            }
        })
        .await
}

async fn list_subjects(State(state): State<Shared>) -> Json<Vec<SubjectSummary>> {
    let mut ids: Vec<String> = state.cache.keys().cloned().collect();
    ids.sort();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let dims = subject_dims(&state, &id).await;
        let qc_status = {
            let store = state.store.lock().expect("store lock");
            store.store().latest(&id).map(|r| r.rating)
        }
        .or_else(|| state.manifest.entry(&id).map(|e| e.qc_status))
        .unwrap_or_default();
        out.push(SubjectSummary {
            sentinel_score: state.sentinel.get(&id).copied(),
            subject_id: id,
            dims,
            qc_status,
        });
    }
    Json(out)
}

#[derive(Debug, Deserialize)]
struct SliceQuery {
    axis: u8,
    index: usize,
    window_min: Option<f64>,
    window_max: Option<f64>,
    overlay: Option<String>,
}

async fn image_data(state: &Shared, id: &str) -> Result<Arc<ImageData>, ApiError> {
    let (entry, cache) = state.entry(id)?;
    let path = state.manifest.resolve(&entry.image_path);
    cache
        .image
        .get_or_try_init(|| async {
            blocking(move || {
                let vol = read_volume(&path).map_err(ApiError::internal)?;
                let window = slice::robust_window(vol.data());
                let dims = vol.grid().dims();
                Ok(Arc::new(ImageData {
                    volume: vol.into_data(),
                    dims,
                    window,
                }))
            })
            .await?
        })
        .await
        .cloned()
}

fn check_slice(dims: [usize; 3], q: &SliceQuery) -> Result<usize, ApiError> {
    let axis = q.axis as usize;
    if axis > 2 {
        return Err(ApiError::bad_request(format!("axis must be 0, 1 or 2, got {axis}")));
    }
    if q.index >= dims[axis] {
        return Err(ApiError::bad_request(format!(
            "index {} out of range for axis {axis} of size {}",
            q.index, dims[axis]
        )));
    }
    Ok(axis)
}

async fn slice_png(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<SliceQuery>,
) -> Result<Response, ApiError> {
    let img = image_data(&state, &id).await?;
    let axis = check_slice(img.dims, &q)?;
    let lo = q.window_min.unwrap_or(img.window.0);
    let hi = q.window_max.unwrap_or(img.window.1);
    let (width, height) = slice::slice_shape(img.dims, axis);
    let values = slice::extract(&img.volume, img.dims, axis, q.index);
    let png = slice::encode_png(width, height, &slice::window_to_u8(&values, lo, hi)).map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OverlayResponse {
    pub subject_id: String,
    pub axis: usize,
    pub index: usize,
    pub overlay: String,
    pub width: usize,
    pub height: usize,
    pub segments: Vec<Segment>,
}

async fn label_data(state: &Shared, id: &str, prediction: bool) -> Result<Arc<LabelMap>, ApiError> {
    let (entry, cache) = state.entry(id)?;
    let (cell, rel) = if prediction {
        let rel = entry.prediction_path.as_deref().ok_or_else(|| {
            ApiError::new(StatusCode::NOT_FOUND, format!("subject `{id}` has no prediction"))
        })?;
        (&cache.prediction, rel)
    } else {
        (&cache.gt, entry.label_path.as_str())
    };
    let path = state.manifest.resolve(rel);
    cell.get_or_try_init(|| async {
        blocking(move || read_labels(&path).map(Arc::new).map_err(ApiError::internal)).await?
    })
    .await
    .cloned()
}

async fn slice_overlay(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<SliceQuery>,
) -> Result<Json<OverlayResponse>, ApiError> {
    let source = q.overlay.clone().unwrap_or_else(|| "gt".into());
    let labels = match source.as_str() {
        "none" => None,
        "gt" => Some(label_data(&state, &id, false).await?),
        "prediction" => Some(label_data(&state, &id, true).await?),
        other => {
            return Err(ApiError::bad_request(format!(
                "overlay must be none, gt or prediction, got `{other}`"
            )))
        }
    };
    let dims = match &labels {
        Some(l) => l.grid().dims(),
        None => image_data(&state, &id).await?.dims,
    };
    let axis = check_slice(dims, &q)?;
    let (width, height) = slice::slice_shape(dims, axis);
    let segments = labels
        .map(|l| slice::rle_rows(&slice::extract(l.data(), dims, axis, q.index), width, height))
        .unwrap_or_default();
    Ok(Json(OverlayResponse {
        subject_id: id,
        axis,
        index: q.index,
        overlay: source,
        width,
        height,
        segments,
    }))
}

#[derive(Debug, Deserialize)]
struct RatingRequest {
    rating: String,
    #[serde(default)]
    affected_structures: Vec<String>,
    #[serde(default)]
    rater: Option<String>,
    #[serde(default)]
    note: String,
}

async fn post_rating(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<RatingRequest>,
) -> Result<Json<QCRecord>, ApiError> {
    state.entry(&id)?;
    let rating: QcStatus = req
        .rating
        .parse()
        .map_err(|e: ulfsynth_core::Error| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let rater = req.rater.filter(|r| !r.trim().is_empty()).unwrap_or_else(|| "anonymous".into());
    let st = state.clone();
    blocking(move || {
        let mut store = st.store.lock().expect("store lock");
        let timestamp = store.store().next_timestamp(&id, &rater, Utc::now());
        let record = QCRecord {
            subject_id: id,
            rating,
            affected_structures: req.affected_structures,
            rater,
            timestamp,
            note: req.note,
        };
        store.append(record.clone()).map_err(|e| match e {
            ulfsynth_core::Error::Validation(m) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m),
            other => ApiError::internal(other),
        })?;
        Ok(Json(record))
    })
    .await?
}

async fn ratings_csv(State(state): State<Shared>) -> Result<Response, ApiError> {
    let mut buf = Vec::new();
    {
        let store = state.store.lock().expect("store lock");
        write_latest_csv(store.store(), &mut buf).map_err(ApiError::internal)?;
    }
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response())
}
