//! Websocket control channel for operator-driven sessions.
//!
//! One engine thread owns the [`OperatorSession`](ltm_core::session::OperatorSession);
//! every console input reaches it through a single queue, so the log is
//! written by exactly one writer. The engine publishes a snapshot after every
//! transition. Only one console may be connected at a time; a second
//! websocket upgrade is answered with `409 Conflict`.
//!
//! Routes:
//! * `GET /ws`: control channel (`{kind, payload, seq_ack}` text frames).
//! * `GET /state`: latest snapshot as JSON.
//! * anything else: static console assets, when an asset directory is set.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use ltm_core::protocol::ProtocolConfig;
use ltm_core::session::{
    run_operator_session, ControlBody, ControlMessage, Inbound, OperatorChannel, Phase, SessionError,
    SessionLog,
};
use thiserror::Error;
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;
use tracing::{info, warn};

pub const HEARTBEAT_INTERVAL: Duration = Duration::from_secs(1);
/// A console silent for this long is treated as disconnected.
pub const DISCONNECT_AFTER: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("engine task failed: {0}")]
    Engine(String),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub protocol: ProtocolConfig,
    pub trials: u32,
    pub operator_id: String,
    pub seed: u64,
    /// Events are appended here as they happen.
    pub log_path: Option<PathBuf>,
    pub assets_dir: Option<PathBuf>,
    pub heartbeat: Duration,
    pub disconnect_after: Duration,
}

impl ServerConfig {
    pub fn new(protocol: ProtocolConfig, trials: u32) -> Self {
        Self {
            protocol,
            trials,
            operator_id: "operator".to_owned(),
            seed: 0,
            log_path: None,
            assets_dir: None,
            heartbeat: HEARTBEAT_INTERVAL,
            disconnect_after: DISCONNECT_AFTER,
        }
    }
}

/// Engine side of the queue: a wall clock plus the inbound receiver.
struct QueueChannel {
    start: Instant,
    rx: mpsc::Receiver<Inbound>,
    out: watch::Sender<Option<ControlMessage>>,
}

impl OperatorChannel for QueueChannel {
    fn now_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    fn recv_until(&mut self, deadline_ms: Option<u64>) -> Inbound {
        let got = match deadline_ms {
            None => self.rx.recv().map_err(|_| mpsc::RecvTimeoutError::Disconnected),
            Some(d) => self
                .rx
                .recv_timeout(Duration::from_millis(d.saturating_sub(self.now_ms()))),
        };
        match got {
            Ok(inbound) => inbound,
            Err(mpsc::RecvTimeoutError::Timeout) => Inbound::Timeout,
            Err(mpsc::RecvTimeoutError::Disconnected) => Inbound::Shutdown,
        }
    }

    fn send(&mut self, msg: ControlMessage) {
        self.out.send_replace(Some(msg));
    }
}

#[derive(Clone)]
struct AppState {
    inbound: mpsc::Sender<Inbound>,
    snapshots: watch::Receiver<Option<ControlMessage>>,
    occupied: Arc<AtomicBool>,
    heartbeat: Duration,
    disconnect_after: Duration,
}

pub struct RunningServer {
    pub local_addr: SocketAddr,
    inbound: mpsc::Sender<Inbound>,
    engine: JoinHandle<Result<SessionLog, SessionError>>,
    http: JoinHandle<()>,
    stop_http: Option<tokio::sync::oneshot::Sender<()>>,
}

/// Aborts a running session from anywhere.
#[derive(Clone)]
pub struct ShutdownHandle(mpsc::Sender<Inbound>);

impl ShutdownHandle {
    pub fn shutdown(&self) {
        let _ = self.0.send(Inbound::Shutdown);
    }
}

impl RunningServer {
    /// Aborts the session; the engine writes `SessionEnded` and stops.
    pub fn shutdown(&self) {
        let _ = self.inbound.send(Inbound::Shutdown);
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        ShutdownHandle(self.inbound.clone())
    }

    /// Waits for the session to finish, then stops the HTTP server.
    pub async fn wait(mut self) -> Result<SessionLog, ControlError> {
        let result = (&mut self.engine)
            .await
            .map_err(|e| ControlError::Engine(e.to_string()))?;
        if let Some(stop) = self.stop_http.take() {
            let _ = stop.send(());
        }
        let _ = (&mut self.http).await;
        Ok(result?)
    }
}

/// Binds `addr` and starts the engine and HTTP server.
pub async fn start(cfg: ServerConfig, addr: SocketAddr) -> Result<RunningServer, ControlError> {
    cfg.protocol.validate().map_err(SessionError::from)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ControlError::Bind { addr, source })?;
    let local_addr = listener
        .local_addr()
        .map_err(|source| ControlError::Bind { addr, source })?;

    let (tx, rx) = mpsc::channel();
    let (out, snapshots) = watch::channel(None);
    let engine_cfg = cfg.clone();
    let engine = tokio::task::spawn_blocking(move || {
        let mut channel = QueueChannel {
            start: Instant::now(),
            rx,
            out,
        };
        run_operator_session(
            &engine_cfg.protocol,
            engine_cfg.trials,
            &engine_cfg.operator_id,
            engine_cfg.seed,
            &mut channel,
            engine_cfg.log_path.as_deref(),
        )
    });

    let state = AppState {
        inbound: tx.clone(),
        snapshots,
        occupied: Arc::new(AtomicBool::new(false)),
        heartbeat: cfg.heartbeat,
        disconnect_after: cfg.disconnect_after,
    };
    let mut app = Router::new()
        .route("/ws", get(ws_handler))
        .route("/state", get(state_handler))
        .with_state(state);
    if let Some(dir) = &cfg.assets_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let http = tokio::spawn(async move {
        let serve = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = stop_rx.await;
        });
        if let Err(e) = serve.await {
            warn!("http server stopped: {e}");
        }
    });
    info!(%local_addr, "control server listening");
    Ok(RunningServer {
        local_addr,
        inbound: tx,
        engine,
        http,
        stop_http: Some(stop_tx),
    })
}

async fn state_handler(State(state): State<AppState>) -> Response {
    match state.snapshots.borrow().clone() {
        Some(msg) => Json(msg).into_response(),
        None => StatusCode::SERVICE_UNAVAILABLE.into_response(),
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    if state
        .occupied
        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
        .is_err()
    {
        return (StatusCode::CONFLICT, "another console is connected").into_response();
    }
    ws.on_upgrade(move |socket| async move {
        let occupied = state.occupied.clone();
        serve_console(socket, state).await;
        occupied.store(false, Ordering::SeqCst);
    })
}

fn finished(msg: &ControlMessage) -> bool {
    matches!(&msg.body, ControlBody::StateSnapshot(s) if s.phase == Phase::Finished)
}

async fn serve_console(socket: WebSocket, mut state: AppState) {
    info!("console connected");
    let (mut sink, mut stream) = socket.split();
    if state.inbound.send(Inbound::Connected).is_err() {
        return;
    }
    // Connected is queued first, so the snapshot that answers it arrives as a
    // change; sending the current value covers the finished case.
    state.snapshots.mark_changed();
    let mut last_seen = Instant::now();
    let mut beat = tokio::time::interval(state.heartbeat);
    let mut acked = 0;
    loop {
        tokio::select! {
            frame = stream.next() => {
                let Some(Ok(frame)) = frame else { break };
                last_seen = Instant::now();
                match frame {
                    Message::Text(text) => match serde_json::from_str::<ControlMessage>(&text) {
                        Ok(msg) => {
                            if state.inbound.send(Inbound::Message(msg)).is_err() {
                                break;
                            }
                        }
                        Err(e) => warn!("unreadable console message: {e}"),
                    },
                    Message::Close(_) => break,
                    _ => {}
                }
            }
            changed = state.snapshots.changed() => {
                if changed.is_err() {
                    break;
                }
                let msg = state.snapshots.borrow_and_update().clone();
                if let Some(msg) = msg {
                    acked = msg.seq_ack;
                    let text = serde_json::to_string(&msg).expect("snapshot serializes");
                    if sink.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                    if finished(&msg) {
                        let _ = sink.send(Message::Close(None)).await;
                        break;
                    }
                }
            }
            _ = beat.tick() => {
                if last_seen.elapsed() >= state.disconnect_after {
                    warn!("console silent for {:?}, dropping it", state.disconnect_after);
                    break;
                }
                let hb = ControlMessage { body: ControlBody::Heartbeat, seq_ack: acked };
                let text = serde_json::to_string(&hb).expect("heartbeat serializes");
                if sink.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
        }
    }
    let _ = state.inbound.send(Inbound::Disconnected);
    info!("console disconnected");
}
