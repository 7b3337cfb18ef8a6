//! Local HTTP service: stateless up/down scaling and in-memory co-editing
//! sessions over the three-canvas stack.

mod routes;
mod state;
pub mod wire;

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::Context;
use axum::Router;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub use routes::{api_router, ApiError};
pub use state::{AppState, ServiceConfig, SessionRecord};

pub const DEFAULT_HOST: &str = "127.0.0.1";
pub const DEFAULT_PORT: u16 = 8787;

/// API routes, plus the static editor bundle when a directory is given.
pub fn app(state: Arc<AppState>, config: &ServiceConfig) -> Router {
    let api = api_router(state);
    match &config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until `shutdown` resolves, then writes the session snapshot if
/// one is configured.
pub async fn run(
    listener: TcpListener,
    state: Arc<AppState>,
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    axum::serve(listener, app(state.clone(), &config))
        .with_graceful_shutdown(shutdown)
        .await
        .context("server failed")?;
    if let Some(path) = &config.snapshot_path {
        write_snapshot(&state, path).await?;
    }
    Ok(())
}

pub async fn write_snapshot(state: &AppState, path: &std::path::Path) -> anyhow::Result<()> {
    let mut all = BTreeMap::new();
    for (id, record) in state.sessions.read().await.iter() {
        all.insert(id.clone(), record.lock().await.response(id));
    }
    let json = serde_json::to_vec_pretty(&all)?;
    std::fs::write(path, json)
        .with_context(|| format!("cannot write snapshot {}", path.display()))?;
    Ok(())
}

/// Loads models, binds `host:port` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let state = Arc::new(AppState::from_config(&config));
    if let Some(e) = &state.model_error {
        tracing::warn!("starting without a complete model pair: {e}");
    }
    let host = if config.host.is_empty() {
        DEFAULT_HOST
    } else {
        config.host.as_str()
    };
    let addr: SocketAddr = format!("{host}:{}", config.port)
        .parse()
        .with_context(|| format!("bad listen address {host}:{}", config.port))?;
    let listener = TcpListener::bind(addr)
        .await
        .with_context(|| format!("cannot bind {addr}"))?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    run(listener, state, config, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
