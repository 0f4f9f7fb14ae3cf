//! HTTP+JSON session service over a shared [`Engine`].
//!
//! Routes: `POST /session`, `POST /session/{id}/query`,
//! `POST /session/{id}/answer`, `GET /session/{id}`, `GET /healthz`.

use std::collections::BTreeMap;
use std::fs;
use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;

use crate::error::{Error, Result};
use crate::pipeline::{Engine, Mode, QueryOutcome, Session, TurnResult};
use crate::retrieval::PassageLookup;

pub const SNIPPET_CHARS: usize = 200;

type SessionSlot = Arc<Mutex<Session>>;

/// Shared service state: the engine plus the in-memory session store.
pub struct AppState {
	engine: Arc<Engine>,
	sessions: Mutex<BTreeMap<String, SessionSlot>>,
	next_id: AtomicU64,
	snapshot: Option<PathBuf>,
	// Serializes snapshot writes.
	snapshot_lock: Mutex<()>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
	next_id: u64,
	sessions: Vec<Session>,
}

impl AppState {
	pub fn new(engine: Arc<Engine>) -> Self {
		Self {
			engine,
			sessions: Mutex::new(BTreeMap::new()),
			next_id: AtomicU64::new(1),
			snapshot: None,
			snapshot_lock: Mutex::new(()),
		}
	}

	/// Persists sessions to `path` after every change, restoring them from
	/// it first when the file exists.
	pub fn with_snapshot(mut self, path: impl Into<PathBuf>) -> Result<Self> {
		let path = path.into();
		if path.is_file() {
			let snap: Snapshot = serde_json::from_str(&fs::read_to_string(&path)?)?;
			self.next_id = AtomicU64::new(snap.next_id);
			let store = self.sessions.get_mut().expect("fresh mutex");
			for s in snap.sessions {
				store.insert(s.id().to_string(), Arc::new(Mutex::new(s)));
			}
		}
		self.snapshot = Some(path);
		Ok(self)
	}

	pub fn session_count(&self) -> usize {
		self.sessions.lock().expect("session store poisoned").len()
	}

	fn slot(&self, id: &str) -> Result<SessionSlot> {
		self.sessions
			.lock()
			.expect("session store poisoned")
			.get(id)
			.cloned()
			.ok_or_else(|| Error::NotFound(format!("session {id}")))
	}

	fn create(&self, mode: Mode) -> Session {
		let id = format!("s{}", self.next_id.fetch_add(1, Ordering::SeqCst));
		let session = Session::new(id.clone(), mode);
		self.sessions.lock().expect("session store poisoned").insert(id, Arc::new(Mutex::new(session.clone())));
		session
	}

	fn persist(&self) -> Result<()> {
		let Some(path) = &self.snapshot else { return Ok(()) };
		let _guard = self.snapshot_lock.lock().expect("snapshot lock poisoned");
		let slots: Vec<SessionSlot> = self.sessions.lock().expect("session store poisoned").values().cloned().collect();
		let sessions = slots.iter().map(|s| s.lock().expect("session poisoned").clone()).collect();
		let snap = Snapshot { next_id: self.next_id.load(Ordering::SeqCst), sessions };
		write_atomic(path, &serde_json::to_vec(&snap)?)
	}
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
	let tmp = path.with_extension("tmp");
	fs::write(&tmp, bytes)?;
	fs::rename(tmp, path)?;
	Ok(())
}

/// Error body `{error, kind}` with a status derived from the error type.
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
	fn from(e: Error) -> Self {
		Self(e)
	}
}

pub fn status_for(e: &Error) -> StatusCode {
	match e {
		Error::State { .. } => StatusCode::CONFLICT,
		Error::NotFound(_) => StatusCode::NOT_FOUND,
		Error::InvalidArguments(_) | Error::InvalidUtterance(_) | Error::Json(_) => StatusCode::BAD_REQUEST,
		Error::BackendUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
		Error::Contract(_) => StatusCode::UNPROCESSABLE_ENTITY,
		_ => StatusCode::INTERNAL_SERVER_ERROR,
	}
}

impl IntoResponse for ApiError {
	fn into_response(self) -> Response {
		let kind = match &self.0 {
			Error::State { .. } => "state",
			Error::NotFound(_) => "not_found",
			Error::InvalidArguments(_) | Error::InvalidUtterance(_) | Error::Json(_) => "invalid_arguments",
			Error::BackendUnavailable(_) => "backend_unavailable",
			Error::Contract(_) => "contract",
			_ => "internal",
		};
		(status_for(&self.0), Json(json!({ "error": self.0.to_string(), "kind": kind }))).into_response()
	}
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
	pub mode: Mode,
}

#[derive(Debug, Deserialize)]
pub struct TextBody {
	pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PassageView {
	pub id: String,
	pub score: f64,
	pub snippet: String,
}

fn snippet(text: &str) -> String {
	text.chars().take(SNIPPET_CHARS).collect()
}

fn turn_json(engine: &Engine, session: &Session, r: &TurnResult) -> Value {
	let passages: Vec<PassageView> = r
		.ranking
		.entries()
		.iter()
		.map(|(id, score)| PassageView {
			id: id.clone(),
			score: *score,
			snippet: engine.index().passage_text(id).map(snippet).unwrap_or_default(),
		})
		.collect();
	json!({
		"session_id": session.id(),
		"mode": session.mode(),
		"label": r.label.map(|l| l.value()),
		"label_name": r.label.map(|l| l.name()),
		"clarifying_question": r.question_asked,
		"resolved_query": r.query_state.resolved_text(),
		"expanded_query": r.query_state.expanded(),
		"passages": passages,
		"state": session.state().as_str(),
	})
}

fn session_json(s: &Session) -> Value {
	let history: Vec<Value> = s
		.history()
		.turns()
		.iter()
		.map(|t| {
			json!({
				"index": t.index(),
				"user": { "kind": t.user().kind().as_str(), "text": t.user().text() },
				"system": {
					"kind": t.system().kind().as_str(),
					"text": t.system().text(),
					"passages": t.system().passages().map(|p| p.ids().collect::<Vec<_>>()),
				},
			})
		})
		.collect();
	json!({
		"session_id": s.id(),
		"mode": s.mode(),
		"state": s.state().as_str(),
		"pending_question": s.pending().map(|(_, q)| q),
		"history": history,
	})
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
	tokio::task::spawn_blocking(f).await.map_err(|e| Error::Contract(format!("worker task failed: {e}")))?
}

async fn create_session(
	State(app): State<Arc<AppState>>,
	Json(body): Json<CreateSession>,
) -> std::result::Result<(StatusCode, Json<Value>), ApiError> {
	let session = app.create(body.mode);
	let app2 = app.clone();
	blocking(move || app2.persist()).await?;
	Ok((
		StatusCode::CREATED,
		Json(json!({ "session_id": session.id(), "mode": session.mode(), "state": session.state().as_str() })),
	))
}

async fn submit_query(
	State(app): State<Arc<AppState>>,
	UrlPath(id): UrlPath<String>,
	Json(body): Json<TextBody>,
) -> std::result::Result<Json<Value>, ApiError> {
	let slot = app.slot(&id)?;
	let value = blocking(move || {
		let mut session = slot.lock().expect("session poisoned");
		let out = match app.engine.submit_query(&mut session, &body.text)? {
			QueryOutcome::Clarify(q) => json!({
				"session_id": session.id(),
				"mode": session.mode(),
				"clarifying_question": q,
				"resolved_query": session.pending().map(|(s, _)| s.resolved_text()),
				"state": session.state().as_str(),
			}),
			QueryOutcome::Ranked(r) => turn_json(&app.engine, &session, &r),
		};
		drop(session);
		app.persist()?;
		Ok(out)
	})
	.await?;
	Ok(Json(value))
}

async fn submit_answer(
	State(app): State<Arc<AppState>>,
	UrlPath(id): UrlPath<String>,
	Json(body): Json<TextBody>,
) -> std::result::Result<Json<Value>, ApiError> {
	let slot = app.slot(&id)?;
	let value = blocking(move || {
		let mut session = slot.lock().expect("session poisoned");
		let r = app.engine.submit_answer(&mut session, &body.text)?;
		let out = turn_json(&app.engine, &session, &r);
		drop(session);
		app.persist()?;
		Ok(out)
	})
	.await?;
	Ok(Json(value))
}

async fn get_session(
	State(app): State<Arc<AppState>>,
	UrlPath(id): UrlPath<String>,
) -> std::result::Result<Json<Value>, ApiError> {
	let slot = app.slot(&id)?;
	let session = slot.lock().expect("session poisoned").clone();
	Ok(Json(session_json(&session)))
}

async fn healthz(State(app): State<Arc<AppState>>) -> Json<Value> {
	Json(json!({
		"status": "ok",
		"passages": app.engine.index().doc_count(),
		"questions": app.engine.pool().len(),
		"sessions": app.session_count(),
		"backends": app.engine.backend_ids(),
	}))
}

pub fn router(state: Arc<AppState>) -> Router {
	Router::new()
		.route("/session", post(create_session))
		.route("/session/{id}", get(get_session))
		.route("/session/{id}/query", post(submit_query))
		.route("/session/{id}/answer", post(submit_answer))
		.route("/healthz", get(healthz))
		.with_state(state)
}

/// Binds `addr`, reporting a busy port as a configuration error.
pub async fn bind(addr: &str) -> Result<TcpListener> {
	TcpListener::bind(addr).await.map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))
}

/// Serves until `shutdown` resolves; in-flight requests are allowed to
/// finish.
pub async fn serve(
	listener: TcpListener,
	state: Arc<AppState>,
	shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<()> {
	axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
	Ok(())
}

/// Binds an ephemeral local port and serves in the background; for tests
/// and examples. Returns the address and a sender that stops the server.
pub async fn spawn_local(
	state: Arc<AppState>,
) -> Result<(SocketAddr, tokio::sync::oneshot::Sender<()>, tokio::task::JoinHandle<Result<()>>)> {
	let listener = bind("127.0.0.1:0").await?;
	let addr = listener.local_addr()?;
	let (tx, rx) = tokio::sync::oneshot::channel();
	let handle = tokio::spawn(serve(listener, state, async {
		let _ = rx.await;
	}));
	Ok((addr, tx, handle))
}
