//! HTTP front end for colorization.
//!
//! `POST /v1/colorize` takes a line art, optional RGBA strokes and a model id,
//! as multipart form fields or as base64 strings in JSON. The reply is JSON
//! with a base64 PNG, or the raw PNG when the client sends `Accept: image/png`.
//! `GET /v1/models` lists checkpoints and `GET /healthz` reports load state.

pub mod api;
pub mod config;
pub mod store;

use std::sync::{Arc, Mutex};

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::CorsLayer;

pub use config::ServiceConfig;
pub use store::{Lookup, ModelInfo, ModelState, ModelStore};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct AppState {
    pub config: ServiceConfig,
    pub store: Arc<ModelStore>,
    /// Forward passes run one at a time on the shared device.
    pub forward_lock: Arc<Mutex<()>>,
}

impl AppState {
    pub fn new(config: ServiceConfig, store: Arc<ModelStore>) -> Arc<Self> {
        Arc::new(AppState {
            config,
            store,
            forward_lock: Arc::new(Mutex::new(())),
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_body_bytes;
    Router::new()
        .route("/v1/colorize", post(api::colorize))
        .route("/v1/models", get(api::models))
        .route("/healthz", get(api::healthz))
        .layer(DefaultBodyLimit::max(limit))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Scan the model directory, start loading the default model and serve until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    config.validate()?;
    let store = Arc::new(ModelStore::scan(&config.model_dir, config.cache_capacity)?);
    match store.default_id() {
        Some(id) => {
            let _ = store.get(&id);
        }
        None => log::warn!("no checkpoints in {}", config.model_dir.display()),
    }
    let listener = tokio::net::TcpListener::bind(config.bind_addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    let app = router(AppState::new(config, store));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
