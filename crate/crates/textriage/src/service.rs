//! HTTP service: stateless document classification and live sessions.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::Rng;
use serde_json::{json, Value};
use textriage_core::ImageBuffer;
use tower_http::services::ServeDir;

use crate::annotations::image_digest;
use crate::backends::BackendFactory;
use crate::config::PipelineConfig;
use crate::io::decode_image;
use crate::live::{FrameResult, LiveSession};
use crate::pipeline::{process_image, RunOptions};

const BODY_LIMIT: usize = 64 << 20;

pub struct AppState {
    base: PipelineConfig,
    factory: Arc<BackendFactory>,
    sessions: Mutex<HashMap<String, Arc<LiveSession>>>,
    documents: AtomicU64,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn new(base: PipelineConfig, factory: Arc<BackendFactory>) -> SharedState {
        Arc::new(Self {
            base,
            factory,
            sessions: Mutex::new(HashMap::new()),
            documents: AtomicU64::new(0),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<LiveSession>, ApiError> {
        self.sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id:?}")))
    }
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

    fn bad_image(message: impl std::fmt::Display) -> Self {
        Self::new(
            StatusCode::BAD_REQUEST,
            format!("undecodable image: {message}"),
        )
    }

    fn invalid(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Overrides arriving over HTTP may tune the pipeline but never choose
/// backends, since those name files and commands on the server.
fn checked_overrides(overrides: &Value) -> ApiResult<()> {
    match overrides {
        Value::Null => Ok(()),
        Value::Object(map) => match map
            .keys()
            .find(|k| *k == "backends" || k.starts_with("backends."))
        {
            Some(k) => Err(ApiError::invalid(format!(
                "{k}: backend selection is fixed by the server"
            ))),
            None => Ok(()),
        },
        _ => Err(ApiError::invalid("config overrides must be a JSON object")),
    }
}

fn with_overrides(base: &PipelineConfig, overrides: &Value) -> ApiResult<PipelineConfig> {
    checked_overrides(overrides)?;
    let mut cfg = base.clone();
    cfg.apply_json(overrides).map_err(ApiError::invalid)?;
    Ok(cfg)
}

fn image_from_b64(text: &str) -> ApiResult<ImageBuffer> {
    let bytes = B64.decode(text.trim()).map_err(ApiError::bad_image)?;
    decode_image(&bytes).map_err(ApiError::bad_image)
}

fn is_json(req: &Request) -> bool {
    req.headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|ct| ct.starts_with("application/json"))
}

fn is_multipart(req: &Request) -> bool {
    req.headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|ct| ct.starts_with("multipart/form-data"))
}

/// An image plus optional overrides, from JSON (`image_b64`,
/// `config_overrides`), multipart (`image` file part, optional
/// `config_overrides` text part) or a raw image body.
async fn read_upload(req: Request, state: &SharedState) -> ApiResult<(ImageBuffer, Value)> {
    if is_json(&req) {
        let Json(body): Json<Value> = Json::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
        let image = body
            .get("image_b64")
            .and_then(Value::as_str)
            .ok_or_else(|| ApiError::bad_image("missing image_b64"))?;
        let overrides = body.get("config_overrides").cloned().unwrap_or(Value::Null);
        Ok((image_from_b64(image)?, overrides))
    } else if is_multipart(&req) {
        let mut mp = Multipart::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
        let (mut image, mut overrides) = (None, Value::Null);
        while let Some(field) = mp
            .next_field()
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?
        {
            let name = field.name().unwrap_or("").to_string();
            let is_file = field.file_name().is_some();
            let data = field
                .bytes()
                .await
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
            if name == "config_overrides" {
                overrides = serde_json::from_slice(&data).map_err(ApiError::invalid)?;
            } else if name == "image" || (is_file && image.is_none()) {
                image = Some(decode_image(&data).map_err(ApiError::bad_image)?);
            }
        }
        Ok((
            image.ok_or_else(|| ApiError::bad_image("no image part"))?,
            overrides,
        ))
    } else {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
        Ok((
            decode_image(&bytes).map_err(ApiError::bad_image)?,
            Value::Null,
        ))
    }
}

async fn post_document(State(state): State<SharedState>, req: Request) -> ApiResult<Json<Value>> {
    let (image, overrides) = read_upload(req, &state).await?;
    let cfg = with_overrides(&state.base, &overrides)?;
    let n = state.documents.fetch_add(1, Ordering::Relaxed) + 1;
    let id = format!("doc-{n}");
    let factory = state.factory.clone();
    let source = format!("sha256:{}", &image_digest(&image)[..16]);
    let result = tokio::task::spawn_blocking(move || {
        let mut backends = factory
            .build(&cfg.backends, cfg.tiles.scale)
            .map_err(ApiError::invalid)?;
        process_image(&image, &source, &cfg, &mut backends, RunOptions::FULL).map_err(|e| {
            let status = if e.is_unavailable() {
                StatusCode::SERVICE_UNAVAILABLE
            } else {
                StatusCode::INTERNAL_SERVER_ERROR
            };
            ApiError::new(status, e.to_string())
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let mut body = result.to_json();
    body["id"] = json!(id);
    Ok(Json(body))
}

fn new_session_id(taken: &HashMap<String, Arc<LiveSession>>) -> String {
    let mut rng = rand::rng();
    loop {
        let id = format!("{:016x}", rng.random::<u64>());
        if !taken.contains_key(&id) {
            return id;
        }
    }
}

async fn create_session(State(state): State<SharedState>, body: Bytes) -> ApiResult<Response> {
    let body: Value = if body.iter().all(u8::is_ascii_whitespace) {
        Value::Null
    } else {
        serde_json::from_slice(&body).map_err(ApiError::invalid)?
    };
    let overrides = body.get("config_overrides").cloned().unwrap_or(Value::Null);
    let cfg = with_overrides(&state.base, &overrides)?;
    let session =
        LiveSession::start(cfg, state.factory.clone(), None).map_err(ApiError::invalid)?;
    let mut sessions = state.sessions.lock().unwrap_or_else(|p| p.into_inner());
    let id = new_session_id(&sessions);
    sessions.insert(id.clone(), Arc::new(session));
    Ok((StatusCode::CREATED, Json(json!({"session_id": id}))).into_response())
}

fn closed(id: &str) -> ApiError {
    ApiError::new(StatusCode::CONFLICT, format!("session {id:?} is closed"))
}

async fn post_frame(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    req: Request,
) -> ApiResult<Response> {
    let session = state.session(&id)?;
    if session.is_closed() {
        return Err(closed(&id));
    }
    let (image, _) = read_upload(req, &state).await?;
    let submitted = session.submit(image).map_err(|_| closed(&id))?;
    Ok((StatusCode::ACCEPTED, Json(json!(submitted))).into_response())
}

fn frame_json(id: &str, r: &FrameResult, session: &LiveSession) -> Value {
    let (result, error) = match &r.outcome {
        Ok(doc) => (doc.to_json(), Value::Null),
        Err(e) => (Value::Null, json!(e)),
    };
    json!({
        "session_id": id,
        "seq": r.seq,
        "latency_ms": r.latency_ms,
        "counters": session.counters(),
        "result": result,
        "error": error,
    })
}

async fn get_result(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let session = state.session(&id)?;
    Ok(match session.last_result() {
        None => StatusCode::NO_CONTENT.into_response(),
        Some(r) => Json(frame_json(&id, &r, &session)).into_response(),
    })
}

async fn patch_config(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Json(overrides): Json<Value>,
) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    if session.is_closed() {
        return Err(closed(&id));
    }
    checked_overrides(&overrides)?;
    let cfg = session
        .update_config(&overrides)
        .map_err(ApiError::invalid)?;
    Ok(Json(serde_json::to_value(cfg).expect("config serializes")))
}

async fn delete_session(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    if session.is_closed() {
        return Err(closed(&id));
    }
    let summary = tokio::task::spawn_blocking(move || session.close())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let mut body = json!(summary);
    body["session_id"] = json!(id);
    Ok(Json(body))
}

async fn healthz(State(state): State<SharedState>) -> Json<Value> {
    let factory = state.factory.clone();
    let sel = state.base.backends.clone();
    let backends = tokio::task::spawn_blocking(move || factory.probe(&sel))
        .await
        .unwrap_or_default();
    Json(json!({"status": "ok", "backends": backends}))
}

pub fn router(state: SharedState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/documents", post(post_document))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", axum::routing::delete(delete_session))
        .route("/v1/sessions/{id}/frames", post(post_frame))
        .route("/v1/sessions/{id}/result", get(get_result))
        .route("/v1/sessions/{id}/config", patch(patch_config))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state);
    match static_dir.filter(|d| d.is_dir()) {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds and serves until `shutdown` resolves.
pub async fn serve(
    addr: SocketAddr,
    state: SharedState,
    static_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(shutdown)
        .await
}
