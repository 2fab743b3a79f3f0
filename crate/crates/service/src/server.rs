use std::collections::HashMap;
use std::convert::Infallible;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Deserialize;
use tokio::sync::{mpsc, oneshot, watch, Mutex, RwLock};

use pao::model::Preference;
use pao::osp::Action;
use pao::session::{derive_tokens, log_jsonl, parse_log, replay, Phase, Session, SessionConfig, Submission, SCHEMA_VERSION};
use pao::Error;

use crate::wire::{Ack, ApiError, ChoiceRequest, Created, ErrorBody, EventsResponse, JoinRequest, Joined, WireAction};

#[derive(Clone, Debug, Default)]
pub struct ServiceConfig {
    /// Mixed into derived join tokens.
    pub secret: String,
    /// Where event logs are appended, one `{session}.jsonl` per session.
    pub data_dir: Option<PathBuf>,
}

enum Command {
    Join { token: String, declared: Option<Preference>, reply: oneshot::Sender<pao::Result<usize>> },
    Submit { token: String, period: Option<usize>, submission: Submission, reply: oneshot::Sender<pao::Result<usize>> },
    Expire { period: usize },
}

#[derive(Clone)]
struct Handle {
    tx: mpsc::Sender<Command>,
    snapshot: watch::Receiver<Arc<Session>>,
}

struct Inner {
    config: ServiceConfig,
    sessions: RwLock<HashMap<String, Handle>>,
    create: Mutex<()>,
    nonce: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(config: ServiceConfig) -> AppState {
        AppState(Arc::new(Inner {
            config,
            sessions: RwLock::new(HashMap::new()),
            create: Mutex::new(()),
            nonce: AtomicU64::new(0),
        }))
    }

    /// Starts a service and replays every log found in the data directory.
    pub async fn recover(config: ServiceConfig) -> pao::Result<AppState> {
        let state = AppState::new(config);
        let Some(dir) = state.0.config.data_dir.clone() else { return Ok(state) };
        std::fs::create_dir_all(&dir)?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for p in paths {
            let session = replay(&parse_log(&std::fs::read_to_string(&p)?)?)?;
            let id = session.id().to_string();
            let handle = spawn_actor(session, Some(p));
            state.0.sessions.write().await.insert(id, handle);
        }
        Ok(state)
    }

    pub async fn snapshot(&self, id: &str) -> Option<Arc<Session>> {
        self.0.sessions.read().await.get(id).map(|h| h.snapshot.borrow().clone())
    }
}

fn log_path(dir: &FsPath, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

fn append(path: &FsPath, events: &[pao::session::Event]) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(log_jsonl(events).as_bytes())?;
    f.sync_data()
}

fn schedule_deadline(s: &Session, tx: &mpsc::Sender<Command>) {
    if let (Some(ms), Phase::Running) = (s.config().deadline_ms, s.phase) {
        let (tx, period) = (tx.clone(), s.period);
        tokio::spawn(async move {
            tokio::time::sleep(Duration::from_millis(ms)).await;
            let _ = tx.send(Command::Expire { period }).await;
        });
    }
}

/// One task per session: commands are applied strictly in arrival order to a
/// copy of the state, which replaces the published snapshot only on success.
fn spawn_actor(session: Session, path: Option<PathBuf>) -> Handle {
    let (tx, mut rx) = mpsc::channel::<Command>(64);
    let (snap_tx, snap_rx) = watch::channel(Arc::new(session.clone()));
    let self_tx = tx.clone();
    tokio::spawn(async move {
        let mut current = session;
        schedule_deadline(&current, &self_tx);
        while let Some(cmd) = rx.recv().await {
            let mut next = current.clone();
            let (outcome, reply) = match cmd {
                Command::Join { token, declared, reply } => (next.join(&token, declared), Some(reply)),
                Command::Submit { token, period, submission, reply } => (next.submit(&token, period, submission), Some(reply)),
                Command::Expire { period } => (next.expire(period).map(|_| 0), None),
            };
            let outcome = outcome.and_then(|seat| {
                if let Some(p) = &path {
                    append(p, &next.log()[current.log().len()..]).map_err(|e| Error::Io(e.to_string()))?;
                }
                Ok(seat)
            });
            if outcome.is_ok() && next.log().len() > current.log().len() {
                let period_moved = next.period != current.period;
                current = next;
                snap_tx.send_replace(Arc::new(current.clone()));
                if period_moved {
                    schedule_deadline(&current, &self_tx);
                }
            }
            if let Some(r) = reply {
                let _ = r.send(outcome);
            }
        }
    });
    Handle { tx, snapshot: snap_rx }
}

struct ApiFailure(StatusCode, String, String);

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        let body = ApiError { v: SCHEMA_VERSION, error: ErrorBody { kind: self.1, message: self.2 } };
        (self.0, Json(body)).into_response()
    }
}

impl From<Error> for ApiFailure {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            Error::InvalidChoice { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid-choice"),
            Error::AlreadySubmitted { .. } => (StatusCode::CONFLICT, "already-submitted"),
            Error::NotAwaited { .. } => (StatusCode::CONFLICT, "not-awaited"),
            Error::Precondition(_) => (StatusCode::CONFLICT, "conflict"),
            Error::Unauthorized(_) => (StatusCode::UNAUTHORIZED, "unauthorized"),
            Error::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
            _ => (StatusCode::BAD_REQUEST, "validation"),
        };
        ApiFailure(status, kind.into(), e.to_string())
    }
}

fn not_found(id: &str) -> ApiFailure {
    ApiFailure(StatusCode::NOT_FOUND, "not-found".into(), format!("no session {id}"))
}

type ApiResult<T> = Result<Json<T>, ApiFailure>;

async fn handle(state: &AppState, id: &str) -> Result<Handle, ApiFailure> {
    state.0.sessions.read().await.get(id).cloned().ok_or_else(|| not_found(id))
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::to_string)
}

async fn create(State(state): State<AppState>, body: String) -> Result<(StatusCode, Json<Created>), ApiFailure> {
    let config: SessionConfig = serde_json::from_str(&body).map_err(|e| Error::Validation(format!("session config: {e}")))?;
    let _guard = state.0.create.lock().await;
    let id = loop {
        let nonce = state.0.nonce.fetch_add(1, Ordering::SeqCst);
        let id = config.session_id(nonce);
        if config.idempotency_key.is_some() || !state.0.sessions.read().await.contains_key(&id) {
            break id;
        }
    };
    if let Some(h) = state.0.sessions.read().await.get(&id) {
        let s = h.snapshot.borrow().clone();
        if s.config() != &config {
            return Err(ApiFailure(StatusCode::CONFLICT, "conflict".into(), "idempotency key reused with another config".into()));
        }
        let created = Created {
            v: SCHEMA_VERSION,
            session: id,
            seats: s.n(),
            tokens: s.tokens().to_vec(),
            admin_token: s.admin_token().to_string(),
            existing: true,
        };
        return Ok((StatusCode::OK, Json(created)));
    }
    let seats = config.market.agents.len();
    let (derived, admin) = derive_tokens(&id, seats, &state.0.config.secret);
    let tokens = config.tokens.clone().unwrap_or(derived);
    let session = Session::create(id.clone(), config, tokens, admin)?;
    let path = state.0.config.data_dir.as_ref().map(|d| log_path(d, &id));
    if let Some(p) = &path {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(Error::from)?;
        }
        append(p, session.log()).map_err(Error::from)?;
    }
    let created = Created {
        v: SCHEMA_VERSION,
        session: id.clone(),
        seats: session.n(),
        tokens: session.tokens().to_vec(),
        admin_token: session.admin_token().to_string(),
        existing: false,
    };
    let h = spawn_actor(session, path);
    state.0.sessions.write().await.insert(id, h);
    Ok((StatusCode::CREATED, Json(created)))
}

async fn send(h: &Handle, cmd: impl FnOnce(oneshot::Sender<pao::Result<usize>>) -> Command) -> Result<usize, ApiFailure> {
    let (reply, rx) = oneshot::channel();
    h.tx.send(cmd(reply)).await.map_err(|_| Error::Io("session task stopped".into()))?;
    Ok(rx.await.map_err(|_| Error::Io("session task stopped".into()))??)
}

async fn join(State(state): State<AppState>, Path(id): Path<String>, Json(req): Json<JoinRequest>) -> ApiResult<Joined> {
    let h = handle(&state, &id).await?;
    let declared = match &req.declared {
        Some(labels) => Some(h.snapshot.borrow().market().parse_preference(labels)?),
        None => None,
    };
    let seat = send(&h, |reply| Command::Join { token: req.token.clone(), declared, reply }).await?;
    let view = h.snapshot.borrow().participant_view(seat);
    Ok(Json(Joined { v: SCHEMA_VERSION, session: id, seat, view }))
}

#[derive(Deserialize)]
struct SeatQuery {
    seat: Option<usize>,
    token: Option<String>,
}

/// Seat named in the query, checked against the token; `None` for the admin.
fn authorize(s: &Session, q: &SeatQuery, headers: &HeaderMap) -> Result<Option<usize>, ApiFailure> {
    let token = bearer(headers).or_else(|| q.token.clone()).ok_or_else(|| Error::Unauthorized("missing token".into()))?;
    if s.is_admin(&token) {
        if let Some(seat) = q.seat {
            if seat >= s.n() {
                return Err(Error::Validation(format!("no seat {seat}")).into());
            }
        }
        return Ok(q.seat);
    }
    let seat = s.seat_of(&token)?;
    if q.seat.is_some_and(|q| q != seat) {
        return Err(Error::Unauthorized("token belongs to another seat".into()).into());
    }
    Ok(Some(seat))
}

async fn view(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SeatQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiFailure> {
    let h = handle(&state, &id).await?;
    let s = h.snapshot.borrow().clone();
    Ok(match authorize(&s, &q, &headers)? {
        Some(seat) => Json(s.participant_view(seat)).into_response(),
        None => Json(s.admin_view()).into_response(),
    })
}

fn submission(s: &Session, req: &ChoiceRequest) -> pao::Result<Submission> {
    let m = s.market();
    match (&req.object, &req.ranking, &req.action) {
        (Some(o), None, None) => Ok(Submission::Pick { object: m.parse_obj(o)? }),
        (None, Some(r), None) => Ok(Submission::Report { ranking: m.parse_preference(r)? }),
        (None, None, Some(WireAction::Pass)) => Ok(Submission::Act { action: Action::Pass }),
        (None, None, Some(WireAction::Clinch(o))) => Ok(Submission::Act { action: Action::Clinch(m.parse_obj(o)?) }),
        _ => Err(Error::Validation("give exactly one of object, ranking or action".into())),
    }
}

async fn choice(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(req): Json<ChoiceRequest>,
) -> ApiResult<Ack> {
    let h = handle(&state, &id).await?;
    let token = req.token.clone().or_else(|| bearer(&headers)).ok_or_else(|| Error::Unauthorized("missing token".into()))?;
    let sub = submission(&h.snapshot.borrow(), &req)?;
    let period = req.period;
    let seat = send(&h, |reply| Command::Submit { token, period, submission: sub, reply }).await?;
    let s = h.snapshot.borrow().clone();
    Ok(Json(Ack { v: SCHEMA_VERSION, accepted: true, seat, period: s.period, view: s.participant_view(seat) }))
}

async fn result(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<pao::session::ResultView> {
    let h = handle(&state, &id).await?;
    let view = h.snapshot.borrow().result_view();
    Ok(Json(view))
}

async fn events(State(state): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<EventsResponse> {
    let h = handle(&state, &id).await?;
    let s = h.snapshot.borrow().clone();
    if !bearer(&headers).is_some_and(|t| s.is_admin(&t)) {
        return Err(Error::Unauthorized("the event log needs the admin token".into()).into());
    }
    Ok(Json(EventsResponse { v: SCHEMA_VERSION, admin: s.admin_view(), events: s.log().to_vec() }))
}

fn view_json(s: &Session, seat: Option<usize>) -> String {
    match seat {
        Some(seat) => serde_json::to_string(&s.participant_view(seat)),
        None => serde_json::to_string(&s.admin_view()),
    }
    .expect("serializable")
}

/// Pushes the caller's view after every transition that changes it; ends
/// after the view of a finished or aborted session.
async fn stream_views(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SeatQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiFailure> {
    let h = handle(&state, &id).await?;
    let seat = authorize(&h.snapshot.borrow().clone(), &q, &headers)?;
    let name = if seat.is_some() { "view" } else { "admin" };
    let rx = h.snapshot.clone();
    let s = stream::unfold((rx, None::<String>, false), move |(mut rx, last, done)| async move {
        if done {
            return None;
        }
        loop {
            let (json, over) = {
                let s = rx.borrow_and_update().clone();
                (view_json(&s, seat), matches!(s.phase, Phase::Finished | Phase::Aborted))
            };
            if last.as_deref() != Some(json.as_str()) {
                let ev = SseEvent::default().event(name).data(json.clone());
                return Some((Ok(ev), (rx, Some(json), over)));
            }
            if over || rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Sse::new(s).keep_alive(KeepAlive::default()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/join", post(join))
        .route("/sessions/{id}/view", get(view))
        .route("/sessions/{id}/choice", post(choice))
        .route("/sessions/{id}/result", get(result))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/stream", get(stream_views))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
