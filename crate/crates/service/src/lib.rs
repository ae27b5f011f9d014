//! HTTP front end for [`labrag_core::chat::LabAssistant`]: per-session state,
//! expiry and the `/v1` JSON routes.

pub mod api;
pub mod config;
pub mod store;

use std::sync::Arc;
use std::time::Duration;

use labrag_core::clock::{Clock, SystemClock};

pub use api::{router, AnswerView, AppState, SessionSummary, SessionView};
pub use config::{AppConfig, ConfigError};
pub use store::SessionStore;

/// Bind, load the index in the background and serve until Ctrl-C.
///
/// The listener is up before the index finishes loading; until then
/// `/v1/health` and the session routes answer 503.
pub async fn serve(config: AppConfig) -> Result<(), ConfigError> {
    let addr = config.socket_addr()?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ConfigError::Startup(format!("cannot bind {addr}: {e}")))?;
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let store = match &config.persistence_path {
        Some(path) => SessionStore::with_persistence(config.session_ttl, clock.clone(), path).map_err(|source| {
            ConfigError::Io {
                path: path.clone(),
                source,
            }
        })?,
        None => SessionStore::new(config.session_ttl, clock.clone()),
    };
    tracing::info!(restored = store.len(), "listening on {addr}");
    let state = AppState::new(store);

    // A failed load stops the server and becomes the return value.
    let (fail_tx, fail_rx) = tokio::sync::oneshot::channel::<ConfigError>();
    {
        let state = state.clone();
        let config = config.clone();
        tokio::spawn(async move {
            let error = match tokio::task::spawn_blocking(move || config.build_assistant(clock)).await {
                Ok(Ok(assistant)) => {
                    tracing::info!(documents = assistant.index().len(), "index loaded");
                    state.set_assistant(Arc::new(assistant));
                    return;
                }
                Ok(Err(e)) => e,
                Err(e) => ConfigError::Startup(format!("loader task failed: {e}")),
            };
            tracing::error!("{error}");
            let _ = fail_tx.send(error);
        });
    }

    let sweeper = {
        let state = state.clone();
        let every = Duration::from_secs(config.session_ttl.clamp(1, 60));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            loop {
                tick.tick().await;
                state.store().sweep();
            }
        })
    };

    let failure = Arc::new(std::sync::Mutex::new(None));
    let shutdown = {
        let failure = failure.clone();
        async move {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => tracing::info!("shutting down"),
                Ok(e) = fail_rx => *failure.lock().expect("failure slot poisoned") = Some(e),
            }
        }
    };
    let served = axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await;
    sweeper.abort();
    served.map_err(|e| ConfigError::Startup(format!("server error: {e}")))?;
    let failed = failure.lock().expect("failure slot poisoned").take();
    failed.map_or(Ok(()), Err)
}
