//! HTTP/JSON service for headless runs, record replay and metrics, plus an
//! optional live session driven over a WebSocket.
//!
//! | route | body |
//! |---|---|
//! | `GET /healthz` | |
//! | `POST /v1/scenario/parse` | `ParseRequest` → `Scenario` |
//! | `POST /v1/run` | `RunRequest` → `RunResponse` |
//! | `POST /v1/replay` | `RecordRequest` → `ReplayResponse` |
//! | `POST /v1/metrics` | `RecordRequest` → `MetricsReport` |
//! | `POST /v1/csv` | `RecordRequest` → CSV text |
//! | `POST /v1/paths/resample` | `ResampleRequest` → nodes |
//! | `POST /v1/control/retarget` | `RetargetRequest` → `FieldCommand` |
//! | `POST /v1/coils/currents`, `/v1/coils/field` | coil conversions |
//! | `POST /v1/diffusion` | Stokes–Einstein coefficients |
//! | `GET /v1/session` | `SessionStatus` |
//! | `POST /v1/session/events` | `Event` → `EventAck` |
//! | `GET /v1/session/snapshot`, `/record`, `/frame.pgm` | latest state, JSON-lines record, PGM frame |
//! | `GET /v1/session/ws` | live operator protocol |

pub mod live;
mod routes;
mod ws;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use thiserror::Error;

use microsteer_core::session::{Scenario, SessionError};

pub use live::LiveHandle;
pub use routes::ApiError;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub scenario: Scenario,
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
}

#[derive(Clone, Default)]
pub struct AppState {
    pub live: Option<Arc<LiveHandle>>,
}

impl AppState {
    pub fn new(live: Option<LiveConfig>) -> Result<Self, SessionError> {
        let live = live.map(|c| LiveHandle::start(c.scenario, c.speed)).transpose()?;
        Ok(AppState { live })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(routes::healthz))
        .route("/v1/scenario/parse", post(routes::parse_scenario))
        .route("/v1/run", post(routes::run))
        .route("/v1/replay", post(routes::replay_record))
        .route("/v1/metrics", post(routes::record_metrics))
        .route("/v1/csv", post(routes::record_csv))
        .route("/v1/paths/resample", post(routes::resample))
        .route("/v1/control/retarget", post(routes::retarget))
        .route("/v1/coils/currents", post(routes::coil_currents))
        .route("/v1/coils/field", post(routes::coil_field))
        .route("/v1/diffusion", post(routes::diffusion))
        .route("/v1/session", get(routes::session_status))
        .route("/v1/session/events", post(routes::session_event))
        .route("/v1/session/snapshot", get(routes::session_snapshot))
        .route("/v1/session/record", get(routes::session_record))
        .route("/v1/session/frame.pgm", get(routes::session_frame))
        .route("/v1/session/ws", get(routes::session_ws))
        .with_state(state)
}

/// A server running on a background task.
pub struct RunningServer {
    addr: SocketAddr,
    state: AppState,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn live(&self) -> Option<&Arc<LiveHandle>> {
        self.state.live.as_ref()
    }

    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        // open operator connections would hold a graceful shutdown forever
        let result = match tokio::time::timeout(std::time::Duration::from_secs(2), &mut self.task).await {
            Ok(joined) => joined.unwrap_or_else(|e| Err(std::io::Error::other(e))),
            Err(_) => {
                self.task.abort();
                Ok(())
            }
        };
        if let Some(live) = &self.state.live {
            live.shutdown();
        }
        result
    }
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub async fn spawn(addr: SocketAddr, live: Option<LiveConfig>) -> Result<RunningServer, ServerError> {
    let state = AppState::new(live)?;
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(state.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!(%addr, "listening");
    Ok(RunningServer { addr, state, shutdown: Some(tx), task })
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    live: Option<LiveConfig>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServerError> {
    let state = AppState::new(live)?;
    let app = router(state.clone());
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    if let Some(live) = &state.live {
        live.shutdown();
    }
    Ok(())
}
