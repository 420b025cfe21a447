//! Read-only verification service over a provenance store.
//!
//! Routes:
//!
//! | method | path                               | body                          |
//! |--------|------------------------------------|-------------------------------|
//! | GET    | `/health`                          | `{"status":"ok",...}`         |
//! | GET    | `/devices`                         | device ids                    |
//! | GET    | `/devices/{device}/index`          | chain index entries           |
//! | GET    | `/devices/{device}/audit`          | `AuditReport`                 |
//! | GET    | `/artifacts/{device}/{session}`    | stored artifact bytes         |
//! | POST   | `/verify`                          | `VerificationReport`          |
//!
//! Nothing here writes the store; any other method on a known path is 405.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bytes::Bytes;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use qdna_core::provenance::{verify_file_bytes, HmacKey, VerificationReport, VerifyingKey};
use qdna_core::store::{AuditReport, IndexEntry, Store};
use qdna_core::Error as CoreError;

/// Uploads above this size are refused before parsing.
pub const MAX_UPLOAD_BYTES: usize = 4 * 1024 * 1024;

pub struct AppState {
    pub store: Store,
    pub public_key: VerifyingKey,
    /// When set, uploaded artifacts also get their HMAC checked.
    pub hmac_key: Option<HmacKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub signer_key_id: String,
    pub hmac_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

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

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match &e {
            CoreError::NotFound(_) => StatusCode::NOT_FOUND,
            CoreError::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            CoreError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                StatusCode::NOT_FOUND
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(status = %self.status, "{}", self.message);
        }
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

type Shared = Arc<AppState>;

/// Store access is plain file I/O, so it runs off the async workers.
async fn blocking<T, F>(state: &Shared, f: F) -> Result<T, ApiError>
where
    F: FnOnce(&AppState) -> qdna_core::Result<T> + Send + 'static,
    T: Send + 'static,
{
    let state = state.clone();
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

async fn health(State(state): State<Shared>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        signer_key_id: state.public_key.key_id().to_string(),
        hmac_enabled: state.hmac_key.is_some(),
    })
}

async fn devices(State(state): State<Shared>) -> Result<Json<Vec<String>>, ApiError> {
    Ok(Json(blocking(&state, |s| s.store.devices()).await?))
}

fn known_device(s: &AppState, device: &str) -> qdna_core::Result<()> {
    if s.store.devices()?.iter().any(|d| d == device) {
        Ok(())
    } else {
        Err(CoreError::NotFound(format!("device {device}")))
    }
}

async fn device_index(
    State(state): State<Shared>,
    Path(device): Path<String>,
) -> Result<Json<Vec<IndexEntry>>, ApiError> {
    let index = blocking(&state, move |s| {
        let entries = s.store.index(&device)?;
        if entries.is_empty() {
            known_device(s, &device)?;
        }
        Ok(entries)
    })
    .await?;
    Ok(Json(index))
}

async fn device_audit(
    State(state): State<Shared>,
    Path(device): Path<String>,
) -> Result<Json<AuditReport>, ApiError> {
    let report = blocking(&state, move |s| {
        known_device(s, &device)?;
        s.store.audit_chain(&device, Some(&s.public_key))
    })
    .await?;
    Ok(Json(report))
}

async fn artifact(
    State(state): State<Shared>,
    Path((device, session)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let bytes = blocking(&state, move |s| s.store.get_bytes(&device, &session)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn verify_upload(
    State(state): State<Shared>,
    body: Bytes,
) -> Result<Json<VerificationReport>, ApiError> {
    let report = verify_file_bytes(&body, &state.public_key, state.hmac_key.as_ref())
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(Json(report))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/devices", get(devices))
        .route("/devices/{device}/index", get(device_index))
        .route("/devices/{device}/audit", get(device_audit))
        .route("/artifacts/{device}/{session}", get(artifact))
        .route("/verify", post(verify_upload))
        .layer(axum::extract::DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(Arc::new(state))
}

pub async fn bind(addr: &str) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

/// Serves until the future `shutdown` resolves.
pub async fn serve_with_shutdown(
    listener: TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    tracing::info!(?addr, "verification endpoint listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Serves until ctrl-c.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    serve_with_shutdown(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
