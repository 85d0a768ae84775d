//! HTTP session service for interactive segmentation.
//!
//! | method | path                   | body                          | reply                                  |
//! |--------|------------------------|-------------------------------|----------------------------------------|
//! | POST   | `/sessions?predictor=` | multipart `image`, `mask`, `gt` | `{session_id, height, width}`        |
//! | POST   | `/sessions/{id}/clicks`| `{row, col, polarity}`        | `{mask, iou?}`                         |
//! | POST   | `/sessions/{id}/undo`  |                               | `{mask}`                               |
//! | GET    | `/sessions/{id}/state` |                               | `{clicks, mask, dims, predictor}`      |
//!
//! Masks travel as run-length strings (see [`clickseg::rle`]). Every
//! mutation is atomic: a failed request leaves the session as it was.

mod error;
mod registry;
mod routes;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use clickseg::encoding::EncodingConfig;
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use registry::PredictorRegistry;
pub use routes::{ClickRequest, ClickResponse, CreateResponse, Dims, MaskResponse, StateResponse};
pub use store::{SessionRecord, SessionStore, DEFAULT_MAX_SESSIONS, MAX_SESSIONS_ENV};

const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_sessions: usize,
    pub encoding: EncodingConfig,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_sessions: DEFAULT_MAX_SESSIONS,
            encoding: EncodingConfig::default(),
            static_dir: None,
        }
    }
}

impl ServiceConfig {
    /// Defaults, with the session cap taken from `CLICKSEG_MAX_SESSIONS`
    /// when set.
    pub fn from_env() -> Result<Self, String> {
        let mut cfg = Self::default();
        if let Ok(v) = std::env::var(MAX_SESSIONS_ENV) {
            cfg.max_sessions = v
                .parse()
                .ok()
                .filter(|&n: &usize| n > 0)
                .ok_or_else(|| format!("{MAX_SESSIONS_ENV} must be a positive integer, got `{v}`"))?;
        }
        Ok(cfg)
    }
}

pub struct AppState {
    pub registry: PredictorRegistry,
    pub store: SessionStore,
    pub encoding: EncodingConfig,
}

pub type SharedState = Arc<AppState>;

pub fn app_state(registry: PredictorRegistry, cfg: &ServiceConfig) -> SharedState {
    Arc::new(AppState {
        registry,
        store: SessionStore::new(cfg.max_sessions),
        encoding: cfg.encoding,
    })
}

pub fn router(state: SharedState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(routes::create_session))
        .route("/sessions/{id}/clicks", post(routes::add_click))
        .route("/sessions/{id}/undo", post(routes::undo))
        .route("/sessions/{id}/state", get(routes::get_state))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, registry: PredictorRegistry, cfg: ServiceConfig) -> std::io::Result<()> {
    let state = app_state(registry, &cfg);
    let app = router(state, cfg.static_dir.clone());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
