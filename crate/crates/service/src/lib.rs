//! HTTP/JSON service over registered embedding collections.
//!
//! State lives in an append-only journal under `state_dir`; reads run
//! against immutable snapshots while mutations go through one writer.

use std::net::SocketAddr;
use std::path::Path;

pub mod error;
mod routes;
pub mod state;

pub use error::{ApiError, ApiResult};
pub use routes::{router, DEFAULT_PAGE_LIMIT};
pub use state::{AppState, AxisEntry, Event, Snapshot, JOURNAL_FILE};

/// Restores state from `state_dir` and serves until Ctrl-C.
pub async fn serve(state_dir: &Path, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::open(state_dir).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
