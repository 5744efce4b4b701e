//! REST front end for the risk model plus the FHIR client it uses to pull
//! charts from an upstream server.

pub mod api;
pub mod client;
pub mod config;
pub mod mock;
pub mod state;

pub use api::router;
pub use client::{FetchError, FhirClient};
pub use config::ServiceConfig;
pub use state::{load_predictor, AppState, LoadError};

/// Bind `config.listen` and serve until ctrl-c.
pub async fn serve(state: std::sync::Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&state.config().listen).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
