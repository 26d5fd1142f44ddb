//! HTTP and WebSocket front end.
//!
//! `POST /sessions` creates a session, `GET /sessions/{id}/stream` carries
//! client and server messages as JSON text frames, `POST /sessions/{id}/export`
//! ends play if needed and returns the export, `GET /sessions/{id}/document`
//! returns the session document and `GET /fixtures` lists the bundled scenes.
//! Each session sits behind its own lock; the pipeline runs on the blocking pool.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::log::{SessionDocument, SessionStatus};
use crate::scene::fixture_ids;
use crate::session::{ClientBody, ClientMessage, ServerMessage, Session, SessionError};

/// How often an open stream advances its session's clock.
pub const PULSE_INTERVAL: Duration = Duration::from_millis(250);

struct Live {
    session: Mutex<Session>,
    started: Instant,
    /// Sequence numbers used by the HTTP export endpoint.
    internal_seq: AtomicU64,
}

impl Live {
    fn now(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }
}

#[derive(Clone)]
pub struct AppState {
    config: Config,
    sessions: Arc<Mutex<HashMap<String, Arc<Live>>>>,
    next_id: Arc<AtomicU64>,
    data_dir: Option<PathBuf>,
}

impl AppState {
    /// `data_dir`, when set, receives `<session_id>.json` after every change.
    pub fn new(config: Config, data_dir: Option<PathBuf>) -> Self {
        Self {
            config,
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
            data_dir,
        }
    }

    fn get(&self, id: &str) -> Option<Arc<Live>> {
        self.sessions.lock().expect("session map").get(id).cloned()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateRequest {
    pub fixture: String,
    #[serde(default)]
    pub config: Option<Config>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub fixture: String,
    pub characters: Vec<crate::session::CharacterView>,
    pub props: Vec<crate::session::PropView>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

struct ApiError(StatusCode, ErrorBody);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::UnknownFixture(_) => StatusCode::NOT_FOUND,
            SessionError::WrongPhase { .. } | SessionError::OutOfOrder { .. } => StatusCode::CONFLICT,
            SessionError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(
            status,
            ErrorBody {
                code: e.code().into(),
                message: e.to_string(),
            },
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn unknown_session(id: &str) -> ApiError {
    ApiError(
        StatusCode::NOT_FOUND,
        ErrorBody {
            code: "UnknownSession".into(),
            message: format!("no session `{id}`"),
        },
    )
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/fixtures", get(list_fixtures))
        .route("/sessions", post(create))
        .route("/sessions/{id}/stream", get(stream))
        .route("/sessions/{id}/export", post(export))
        .route("/sessions/{id}/document", get(document))
        .with_state(state)
}

async fn list_fixtures() -> Json<Vec<&'static str>> {
    Json(fixture_ids())
}

async fn create(
    State(state): State<AppState>,
    Json(req): Json<CreateRequest>,
) -> Result<Json<CreateResponse>, ApiError> {
    let config = req.config.unwrap_or_else(|| state.config.clone());
    let mut session = Session::create(&req.fixture, config)?;
    let n = state.next_id.fetch_add(1, Ordering::Relaxed);
    let session_id = format!("{}-{n}", req.fixture);
    session.rename(&session_id);
    if let Some(dir) = &state.data_dir {
        session.persist_to(dir.join(format!("{session_id}.json")))?;
    }
    let response = CreateResponse {
        session_id: session_id.clone(),
        fixture: req.fixture,
        characters: crate::session::character_views(session.scene()),
        props: crate::session::prop_views(session.scene()),
    };
    let live = Arc::new(Live {
        session: Mutex::new(session),
        started: Instant::now(),
        internal_seq: AtomicU64::new(1 << 62),
    });
    state.sessions.lock().expect("session map").insert(session_id, live);
    Ok(Json(response))
}

async fn document(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionDocument>, ApiError> {
    let live = state.get(&id).ok_or_else(|| unknown_session(&id))?;
    let doc = live.session.lock().expect("session lock").document();
    Ok(Json(doc))
}

/// Runs one client message on the blocking pool.
async fn ingest(live: Arc<Live>, msg: ClientMessage) -> Vec<ServerMessage> {
    tokio::task::spawn_blocking(move || {
        let now = live.now();
        live.session.lock().expect("session lock").ingest(msg, now)
    })
    .await
    .expect("ingest task")
}

async fn export(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<ServerMessage>, ApiError> {
    let live = state.get(&id).ok_or_else(|| unknown_session(&id))?;
    let status = live.session.lock().expect("session lock").status();
    let mut bodies = Vec::new();
    if status == SessionStatus::Active {
        bodies.push(ClientBody::EndPlay);
    }
    bodies.push(ClientBody::Export { format: None });
    let mut result = None;
    for body in bodies {
        let seq = live.internal_seq.fetch_add(1, Ordering::Relaxed);
        for m in ingest(live.clone(), ClientMessage { seq, t: None, body }).await {
            match m {
                ServerMessage::Error { code, message, .. } => {
                    return Err(ApiError(StatusCode::CONFLICT, ErrorBody { code, message }));
                }
                m @ ServerMessage::ExportResult { .. } => result = Some(m),
                _ => {}
            }
        }
    }
    Ok(Json(result.expect("export succeeded without a result")))
}

async fn stream(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let live = state.get(&id).ok_or_else(|| unknown_session(&id))?;
    Ok(ws.on_upgrade(move |socket| serve_socket(socket, live)))
}

async fn send_all(socket: &mut WebSocket, msgs: Vec<ServerMessage>) -> bool {
    for m in msgs {
        let text = serde_json::to_string(&m).expect("server messages serialize");
        if socket.send(Message::Text(text.into())).await.is_err() {
            return false;
        }
    }
    true
}

async fn serve_socket(mut socket: WebSocket, live: Arc<Live>) {
    let mut pulse = tokio::time::interval(PULSE_INTERVAL);
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let Some(Ok(frame)) = incoming else { return };
                let replies = match frame {
                    Message::Text(text) => match serde_json::from_str::<ClientMessage>(&text) {
                        Ok(msg) => ingest(live.clone(), msg).await,
                        Err(e) => vec![ServerMessage::Error { seq: None, code: "BadMessage".into(), message: e.to_string() }],
                    },
                    Message::Close(_) => return,
                    _ => continue,
                };
                if !send_all(&mut socket, replies).await {
                    return;
                }
            }
            _ = pulse.tick() => {
                let l = live.clone();
                let out = tokio::task::spawn_blocking(move || {
                    let now = l.now();
                    l.session.lock().expect("session lock").pulse(now)
                })
                .await
                .expect("pulse task");
                let msgs = match out {
                    Ok(m) => m,
                    Err(e) => vec![ServerMessage::Error { seq: None, code: e.code().into(), message: e.to_string() }],
                };
                if !send_all(&mut socket, msgs).await {
                    return;
                }
            }
        }
    }
}

/// Binds and serves until the process stops.
pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await
}
