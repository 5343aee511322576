//! HTTP service for interactive direction editing.
//!
//! Every mutating endpoint turns into one [`DisentangleAction`](disentangle_core::DisentangleAction)
//! applied to the session, so the exported log replays to the same direction.
//! All routes live under `/v1`.

pub mod config;
pub mod dto;
mod error;
mod routes;
mod state;

pub use config::{PluginPaths, ServerConfig};
pub use error::{ApiError, ConfigError, ServeError};
pub use routes::router;
pub use state::{load_adapter, AppState, SharedSession};

/// Binds `config.bind` and serves until Ctrl-C.
pub async fn serve(config: ServerConfig) -> Result<(), ServeError> {
    let state = tokio::task::spawn_blocking({
        let config = config.clone();
        move || AppState::from_config(&config)
    })
    .await??;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

