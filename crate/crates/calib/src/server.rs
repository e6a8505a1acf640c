use std::net::SocketAddr;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::extract::ws::{Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use tokio::sync::{broadcast, oneshot};

use crate::protocol::{ClientMessage, Params, ServerMessage};
use crate::worker::{Command, Shared, Worker};
use crate::{FrameSource, ServiceConfig, ServiceError};

#[derive(Clone)]
struct AppState {
    commands: mpsc::Sender<Command>,
    frames: broadcast::Sender<Arc<str>>,
    shared: Arc<Mutex<Shared>>,
}

impl AppState {
    fn snapshot(&self) -> ServerMessage {
        self.shared.lock().expect("shared state").message()
    }
}

/// Handle to a started service; dropping it leaves the service running until
/// the runtime shuts down, [`RunningService::shutdown`] stops it cleanly.
pub struct RunningService {
    pub local_addr: SocketAddr,
    commands: mpsc::Sender<Command>,
    stop: Option<oneshot::Sender<()>>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
    worker: Option<JoinHandle<()>>,
}

impl RunningService {
    pub async fn shutdown(mut self) -> Result<(), ServiceError> {
        let _ = self.commands.send(Command::Shutdown);
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(w) = self.worker.take() {
            tokio::task::spawn_blocking(move || w.join())
                .await
                .map_err(|e| ServiceError::Worker(e.to_string()))?
                .map_err(|_| ServiceError::Worker("processing thread panicked".into()))?;
        }
        (&mut self.server)
            .await
            .map_err(|e| ServiceError::Worker(e.to_string()))?
            .map_err(ServiceError::Serve)
    }
}

/// Binds `addr`, starts the processing thread and serves `GET /ws` and
/// `GET /params` until shut down.
pub async fn start(source: FrameSource, cfg: ServiceConfig, addr: SocketAddr) -> Result<RunningService, ServiceError> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(ServiceError::EmptySource);
    }
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(ServiceError::Bind)?;
    let local_addr = listener.local_addr().map_err(ServiceError::Bind)?;

    let (cmd_tx, cmd_rx) = mpsc::channel();
    let (frames, _) = broadcast::channel(cfg.channel_capacity);
    let shared = Arc::new(Mutex::new(Shared {
        params: Params::from(&cfg.tracker),
        frames_processed: 0,
    }));
    let worker = Worker {
        source,
        cfg: cfg.tracker,
        period: cfg.frame_period(),
        loop_source: cfg.loop_source,
        commands: cmd_rx,
        frames: frames.clone(),
        shared: shared.clone(),
        dims: None,
    };
    let worker = std::thread::Builder::new()
        .name("ringtrack-calib".into())
        .spawn(move || worker.run())
        .map_err(|e| ServiceError::Worker(e.to_string()))?;

    let state = AppState {
        commands: cmd_tx.clone(),
        frames,
        shared,
    };
    let app = Router::new()
        .route("/ws", get(ws_handler))
        .route("/params", get(params_handler))
        .with_state(state);
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop_rx.await;
            })
            .await
    });
    tracing::info!(%local_addr, "calibration service listening");
    Ok(RunningService {
        local_addr,
        commands: cmd_tx,
        stop: Some(stop_tx),
        server,
        worker: Some(worker),
    })
}

async fn params_handler(State(state): State<AppState>) -> impl IntoResponse {
    Json(state.snapshot())
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    let frames = state.frames.subscribe();
    ws.on_upgrade(move |socket| client_session(socket, state, frames))
}

fn encode(msg: &ServerMessage) -> Message {
    Message::Text(Utf8Bytes::from(serde_json::to_string(msg).expect("server messages serialize")))
}

async fn reply(state: &AppState, text: &str) -> ServerMessage {
    match ClientMessage::parse(text) {
        Ok(ClientMessage::Snapshot) => state.snapshot(),
        Ok(ClientMessage::Update(u)) => {
            let id = u.id;
            let (tx, rx) = oneshot::channel();
            if state.commands.send(Command::Update(u, tx)).is_err() {
                return ServerMessage::Error {
                    id,
                    message: "service is shutting down".into(),
                };
            }
            rx.await.unwrap_or(ServerMessage::Error {
                id,
                message: "service is shutting down".into(),
            })
        }
        Err(message) => ServerMessage::Error {
            id: ClientMessage::id_hint(text),
            message,
        },
    }
}

async fn client_session(mut socket: WebSocket, state: AppState, mut frames: broadcast::Receiver<Arc<str>>) {
    loop {
        tokio::select! {
            frame = frames.recv() => {
                let out = match frame {
                    Ok(text) => Message::Text(Utf8Bytes::from(&*text)),
                    Err(broadcast::error::RecvError::Lagged(n)) => encode(&ServerMessage::Error {
                        id: None,
                        message: format!("client too slow, {n} messages dropped"),
                    }),
                    Err(broadcast::error::RecvError::Closed) => break,
                };
                if socket.send(out).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        let msg = ServerMessage::Error { id: None, message: "binary messages are not supported".into() };
                        if socket.send(encode(&msg)).await.is_err() {
                            break;
                        }
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let msg = reply(&state, text.as_str()).await;
                if socket.send(encode(&msg)).await.is_err() {
                    break;
                }
            }
        }
    }
}
