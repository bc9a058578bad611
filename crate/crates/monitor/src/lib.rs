//! Classroom monitor: collects engine events over HTTP, keeps a live view of
//! every student, and serves statistics, grades and solution clusters to the
//! instructor dashboard.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub mod api;
pub mod state;
pub mod store;

pub use api::{router, AppState};
pub use state::{StudentState, Thresholds};
pub use store::{Ingested, Monitor, StoreError};

#[derive(Debug, Clone)]
pub struct MonitorConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub token: Option<String>,
    pub thresholds: Thresholds,
}

/// Opens the data directory and serves until the process is stopped.
pub async fn serve(config: MonitorConfig) -> anyhow::Result<()> {
    let monitor = Arc::new(Monitor::open(&config.data_dir)?);
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    eprintln!(
        "monitor listening on http://{} (data in {})",
        listener.local_addr()?,
        config.data_dir.display()
    );
    let app = router(AppState {
        monitor,
        token: config.token,
        thresholds: config.thresholds,
    });
    axum::serve(listener, app).await?;
    Ok(())
}

/// Blocking entry point for the command line.
pub fn run(config: MonitorConfig) -> anyhow::Result<()> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(serve(config))
}
