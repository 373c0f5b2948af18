//! HTTP facade over the analysis engine.
//!
//! Every request runs against an immutable [`Engine`] snapshot. A reload
//! builds a fresh snapshot and swaps it in; requests already holding the old
//! one finish on it.

mod config;
mod routes;

use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::http::HeaderValue;
use crs_core::artifacts::ArtifactError;
use crs_core::pipeline::EngineError;
use crs_core::{Engine, EngineContext};
use thiserror::Error;
use tokio::net::TcpListener;

pub use config::{ServiceConfig, ENV_KEYS};
pub use routes::{router, AnalyzeRequest, ErrorBody, ParaphraseResponse, ENVELOPE_BYTES};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Build the engine a configuration describes.
pub fn build_engine(cfg: &ServiceConfig) -> Result<Engine, ServiceError> {
    let ctx = EngineContext::load(&cfg.artifacts, &cfg.remote, cfg.mode)?;
    Ok(Engine::new(ctx)?)
}

#[derive(Debug)]
struct Shared {
    engine: RwLock<Option<Arc<Engine>>>,
    config: RwLock<ServiceConfig>,
    config_path: Option<PathBuf>,
    cors: Vec<HeaderValue>,
}

/// Cheaply cloneable handle shared by all handlers.
#[derive(Debug, Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    /// Validate `config` and load its engine. Fails on the first problem.
    pub fn new(config: ServiceConfig, config_path: Option<PathBuf>) -> Result<Self, ServiceError> {
        config.validate()?;
        let engine = build_engine(&config)?;
        Self::with_engine(config, config_path, Some(engine))
    }

    /// State around an existing engine, or none (health reports 503).
    pub fn with_engine(
        config: ServiceConfig,
        config_path: Option<PathBuf>,
        engine: Option<Engine>,
    ) -> Result<Self, ServiceError> {
        let cors = config
            .cors_origins
            .iter()
            .map(|o| {
                HeaderValue::from_str(o)
                    .map_err(|_| ServiceError::Config(format!("invalid CORS origin {o:?}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(AppState {
            shared: Arc::new(Shared {
                engine: RwLock::new(engine.map(Arc::new)),
                config: RwLock::new(config),
                config_path,
                cors,
            }),
        })
    }

    /// The current snapshot.
    pub fn engine(&self) -> Option<Arc<Engine>> {
        self.shared.engine.read().expect("engine lock").clone()
    }

    pub fn config(&self) -> ServiceConfig {
        self.shared.config.read().expect("config lock").clone()
    }

    pub(crate) fn cors_origins(&self) -> &[HeaderValue] {
        &self.shared.cors
    }

    /// Atomically replace the snapshot.
    pub fn swap(&self, engine: Engine) {
        *self.shared.engine.write().expect("engine lock") = Some(Arc::new(engine));
    }

    /// Re-read the configuration and artifacts and swap them in. On failure
    /// the current snapshot keeps serving.
    pub fn reload(&self) -> Result<(), ServiceError> {
        let cfg = ServiceConfig::load(self.shared.config_path.as_deref())?;
        let engine = build_engine(&cfg)?;
        self.swap(engine);
        *self.shared.config.write().expect("config lock") = cfg;
        Ok(())
    }
}

/// Serve until `shutdown` resolves. On unix, SIGHUP triggers a reload.
pub async fn serve(
    state: AppState,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut hup = signal(SignalKind::hangup())?;
        let st = state.clone();
        tokio::spawn(async move {
            while hup.recv().await.is_some() {
                let st = st.clone();
                match tokio::task::spawn_blocking(move || st.reload()).await {
                    Ok(Ok(())) => tracing::info!("artifacts reloaded"),
                    Ok(Err(e)) => tracing::error!("reload failed, keeping current snapshot: {e}"),
                    Err(e) => tracing::error!("reload task failed: {e}"),
                }
            }
        });
    }
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}
