//! HTTP service over a live trace log.
//!
//! A background task tails the log every poll period and publishes an
//! immutable [`Snapshot`]; request handlers read whichever snapshot is
//! current. Routes:
//!
//! - `GET /api/swimlane?since=&mode=&time=`: full model, or what changed after `since`
//! - `GET /api/records/{seq}/isolate?depth=`: neighbourhood of one record
//! - `GET /api/failures`, `GET /api/processes`, `GET /healthz`
//! - static files from the assets directory at `/`

mod api;
mod state;

use std::future::Future;
use std::io;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use axum::Router;
use hvcviz_core::order::{OrderMode, TimeMode};
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub use api::{api_router, ApiError, ApiState, ProcessesResponse, SwimlaneResponse};
pub use state::{IngestOutcome, Ingestor, SharedSnapshot, Snapshot};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_POLL: Duration = Duration::from_millis(500);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub log: PathBuf,
    pub port: u16,
    pub mode: OrderMode,
    pub time_mode: TimeMode,
    pub poll: Duration,
    pub assets: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(log: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            log: log.into(),
            port: DEFAULT_PORT,
            mode: OrderMode::default(),
            time_mode: TimeMode::default(),
            poll: DEFAULT_POLL,
            assets: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("log file {0} does not exist")]
    MissingLog(PathBuf),
    #[error("assets directory {0} does not exist")]
    MissingAssets(PathBuf),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn router(state: ApiState, assets: Option<PathBuf>) -> Router {
    let api = api_router(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Listens on localhost only.
pub async fn bind(port: u16) -> Result<TcpListener, ServiceError> {
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind { addr, source })
}

async fn ingest(ingestor: Ingestor) -> Ingestor {
    tokio::task::spawn_blocking(move || {
        let mut ingestor = ingestor;
        match ingestor.step() {
            Ok(outcome) => {
                for issue in &outcome.issues {
                    tracing::warn!(line = issue.line, "skipping log line: {}", issue.error);
                }
                if outcome.new_records > 0 {
                    tracing::debug!(records = outcome.new_records, "ingested");
                }
            }
            Err(e) => tracing::warn!(path = %ingestor.path().display(), "ingestion failed: {e}"),
        }
        ingestor
    })
    .await
    .expect("ingestion task panicked")
}

/// Serves until `shutdown` resolves.
pub async fn serve<F>(config: ServiceConfig, listener: TcpListener, shutdown: F) -> Result<(), ServiceError>
where
    F: Future<Output = ()> + Send + 'static,
{
    if !config.log.is_file() {
        return Err(ServiceError::MissingLog(config.log));
    }
    if let Some(dir) = &config.assets {
        if !dir.is_dir() {
            return Err(ServiceError::MissingAssets(dir.clone()));
        }
    }

    let shared = SharedSnapshot::new(Snapshot::empty());
    let mut ingestor = ingest(Ingestor::new(&config.log, shared.clone())).await;
    let poll = config.poll;
    let ingest_task = tokio::spawn(async move {
        let mut ticker = tokio::time::interval(poll);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            ticker.tick().await;
            ingestor = ingest(ingestor).await;
        }
    });

    let state = ApiState { snapshot: shared, mode: config.mode, time_mode: config.time_mode };
    let app = router(state, config.assets);
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    ingest_task.abort();
    Ok(result?)
}
