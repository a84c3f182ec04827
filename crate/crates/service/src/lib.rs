//! HTTP service for live preference-elicitation sessions.
//!
//! A session proposes duels, takes the user's choice and reports the current
//! estimate of the preferred point. Each session is an append-only event log;
//! its state is the fold of those events, so a restarted service replays the
//! logs and resumes exactly where it stopped.

pub mod api;
pub mod session;
pub mod store;

use std::net::SocketAddr;
use std::path::Path;

pub use api::{router, AppState};
pub use session::{Event, Session, SessionConfig, SessionState, Status, Winner};
pub use store::EventStore;

/// Serves the API on `addr` until Ctrl-C. Sessions persist to `state_dir`
/// when given.
pub async fn serve(addr: SocketAddr, state_dir: Option<&Path>) -> anyhow::Result<()> {
    let state = match state_dir {
        Some(dir) => AppState::open(dir)?,
        None => AppState::in_memory(),
    };
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
