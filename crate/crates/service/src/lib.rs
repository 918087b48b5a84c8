//! HTTP service for live match sessions.
//!
//! An operator creates a session for a fixture, posts events, clock
//! updates and stoppage announcements as they happen, and asks for
//! forecasts from the current state. A session's match state is always
//! rebuilt from its event log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use uuid::Uuid;

use coxmatch::live::{LogEntry, MatchLog, MatchTime};
use coxmatch::model::{EventType, Fixture, MatchState};
use coxmatch::simulator::{FittedModel, MatchModel, OutcomeDistribution, ResultProbs, ScoreProb};

pub const DEFAULT_SCENARIOS: usize = 20_000;
pub const MAX_SCENARIOS: usize = 1_000_000;

/// Error body: machine-readable `code` plus a message for humans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.into(), message: message.into() } }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<coxmatch::Error> for ApiError {
    fn from(e: coxmatch::Error) -> Self {
        use coxmatch::Error as E;
        let (status, code) = match &e {
            E::TimeRegression { .. } => (StatusCode::CONFLICT, "time_regression"),
            E::UnknownTeam(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_team"),
            E::UnknownModel(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_model"),
            E::InvalidEvent(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_event"),
            E::InvalidState(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_state"),
            E::InvalidArgument(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_argument"),
            E::Spec(_) => (StatusCode::UNPROCESSABLE_ENTITY, "model_requirements"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_query", e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub model: String,
    pub home_team: String,
    pub away_team: String,
    #[serde(default)]
    pub home_value: Option<f64>,
    #[serde(default)]
    pub away_value: Option<f64>,
    /// Scenarios per forecast when the request does not say.
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRequest {
    #[serde(rename = "type")]
    pub event_type: EventType,
    #[serde(flatten)]
    pub time: MatchTime,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppageRequest {
    pub half: u8,
    pub minutes: u32,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ForecastQuery {
    pub n: Option<usize>,
    pub seed: Option<u64>,
    /// Hypothetical event type; applied to a copy of the session.
    pub what_if: Option<EventType>,
    /// Time of the hypothetical event (default: the current minute).
    pub half: Option<u8>,
    pub minute: Option<u32>,
    pub stoppage_offset: Option<u32>,
}

/// What the forecast was allowed to know.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub clock: f64,
    #[serde(flatten)]
    pub time: MatchTime,
    pub events_used: usize,
    pub log_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub session_id: Uuid,
    pub model: String,
    pub seed: u64,
    pub n: usize,
    pub cutoff: Cutoff,
    pub state: MatchState,
    pub what_if: Option<LogEntry>,
    pub result_probs: ResultProbs,
    pub expected_goals: (f64, f64),
    pub top_scores: Vec<ScoreProb>,
    pub distribution: OutcomeDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: Uuid,
    pub model: String,
    pub fixture: Fixture,
    pub state: MatchState,
    pub log_length: usize,
    pub default_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEvent {
    #[serde(rename = "type")]
    pub event_type: EventType,
    #[serde(flatten)]
    pub time: MatchTime,
    pub clock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub sequence: usize,
    pub clock: f64,
    #[serde(flatten)]
    pub time: MatchTime,
    pub seed: u64,
    pub n: usize,
    pub home_goals: u32,
    pub away_goals: u32,
    pub result_probs: ResultProbs,
    pub expected_goals: (f64, f64),
    pub top_scores: Vec<ScoreProb>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub session_id: Uuid,
    pub fixture: Fixture,
    pub entries: Vec<LogEntry>,
    pub events: Vec<HistoryEvent>,
    /// Recorded forecasts ordered by match clock.
    pub forecasts: Vec<HistoryPoint>,
}

/// Lines of the per-session journal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum JournalLine {
    Create { session_id: Uuid, request: CreateSession },
    Entry { entry: LogEntry },
    Undo,
    Forecast { point: HistoryPoint },
}

struct Session {
    id: Uuid,
    model_id: String,
    model: Arc<MatchModel>,
    model_name: String,
    log: MatchLog,
    history: Vec<HistoryPoint>,
    default_n: usize,
    journal: Option<File>,
}

impl Session {
    fn view(&self) -> ApiResult<SessionView> {
        Ok(SessionView {
            session_id: self.id,
            model: self.model_id.clone(),
            fixture: self.log.fixture.clone(),
            state: self.log.state()?,
            log_length: self.log.entries.len(),
            default_n: self.default_n,
        })
    }

    fn write(&mut self, line: &JournalLine) -> ApiResult<()> {
        if let Some(f) = self.journal.as_mut() {
            let text = serde_json::to_string(line).expect("journal lines serialize");
            writeln!(f, "{text}")
                .and_then(|_| f.flush())
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "journal", e.to_string()))?;
        }
        Ok(())
    }

    fn push(&mut self, entry: LogEntry) -> ApiResult<SessionView> {
        self.log.push(entry)?;
        self.write(&JournalLine::Entry { entry })?;
        self.view()
    }
}

pub struct AppState {
    models: HashMap<String, Arc<FittedModel>>,
    sessions: RwLock<HashMap<Uuid, Arc<Mutex<Session>>>>,
    journal_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(models: HashMap<String, FittedModel>, journal_dir: Option<PathBuf>) -> Self {
        AppState {
            models: models.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
            sessions: RwLock::new(HashMap::new()),
            journal_dir,
        }
    }

    pub fn model_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.models.keys().cloned().collect();
        ids.sort();
        ids
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::not_found(id))?;
        self.sessions
            .read()
            .expect("session map lock")
            .get(&uuid)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn build(&self, id: Uuid, request: &CreateSession) -> ApiResult<Session> {
        let model = self.models.get(&request.model).ok_or_else(|| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "unknown_model",
                format!("no model {:?}; loaded: {}", request.model, self.model_ids().join(", ")),
            )
        })?;
        let fixture = Fixture {
            home_team: request.home_team.clone(),
            away_team: request.away_team.clone(),
            home_value: request.home_value,
            away_value: request.away_value,
        };
        let log = MatchLog::new(fixture)?;
        let match_model = model.for_fixture(&log.fixture)?;
        let default_n = request.n.unwrap_or(DEFAULT_SCENARIOS);
        check_n(default_n)?;
        Ok(Session {
            id,
            model_id: request.model.clone(),
            model: Arc::new(match_model),
            model_name: model.name().to_string(),
            log,
            history: Vec::new(),
            default_n,
            journal: None,
        })
    }

    fn journal_path(&self, id: Uuid) -> Option<PathBuf> {
        self.journal_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    /// Rebuilds the sessions journaled in the journal directory.
    pub fn restore(&self) -> std::io::Result<usize> {
        let Some(dir) = &self.journal_dir else {
            return Ok(0);
        };
        let mut restored = 0;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            match self.restore_one(&path) {
                Ok(()) => restored += 1,
                Err(e) => log::warn!("skipping journal {}: {}", path.display(), e.body.message),
            }
        }
        Ok(restored)
    }

    fn restore_one(&self, path: &Path) -> ApiResult<()> {
        let io = |e: std::io::Error| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "journal", e.to_string());
        let reader = BufReader::new(File::open(path).map_err(io)?);
        let mut session: Option<Session> = None;
        for line in reader.lines() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: JournalLine = serde_json::from_str(&line)
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "journal", e.to_string()))?;
            match (parsed, session.as_mut()) {
                (JournalLine::Create { session_id, request }, None) => {
                    session = Some(self.build(session_id, &request)?);
                }
                (JournalLine::Entry { entry }, Some(s)) => {
                    s.log.push(entry)?;
                }
                (JournalLine::Undo, Some(s)) => {
                    s.log.undo();
                }
                (JournalLine::Forecast { point }, Some(s)) => s.history.push(point),
                _ => {
                    return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "journal", "malformed journal"));
                }
            }
        }
        let mut s = session.ok_or_else(|| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "journal", "empty journal"))?;
        s.journal = Some(OpenOptions::new().append(true).open(path).map_err(io)?);
        self.sessions.write().expect("session map lock").insert(s.id, Arc::new(Mutex::new(s)));
        Ok(())
    }
}

fn check_n(n: usize) -> ApiResult<()> {
    if n == 0 || n > MAX_SCENARIOS {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_argument",
            format!("n must be between 1 and {MAX_SCENARIOS}, got {n}"),
        ));
    }
    Ok(())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/models", get(list_models))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/events", post(post_event))
        .route("/sessions/{id}/clock", post(post_clock))
        .route("/sessions/{id}/stoppage", post(post_stoppage))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/forecast", get(get_forecast))
        .route("/sessions/{id}/history", get(get_history))
        .with_state(state)
}

async fn list_models(State(app): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(app.model_ids())
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let Json(request) = body?;
    let id = Uuid::new_v4();
    let mut session = app.build(id, &request)?;
    if let Some(path) = app.journal_path(id) {
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "journal", e.to_string()))?;
        session.journal = Some(file);
        session.write(&JournalLine::Create { session_id: id, request })?;
    }
    let view = session.view()?;
    app.sessions.write().expect("session map lock").insert(id, Arc::new(Mutex::new(session)));
    log::info!("session {id} created");
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionView>> {
    let session = app.session(&id)?;
    let s = session.lock().await;
    Ok(Json(s.view()?))
}

async fn post_event(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<EventRequest>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let session = app.session(&id)?;
    let Json(req) = body?;
    let mut s = session.lock().await;
    Ok(Json(s.push(LogEntry::Event { event_type: req.event_type, time: req.time })?))
}

async fn post_clock(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<MatchTime>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let session = app.session(&id)?;
    let Json(time) = body?;
    let mut s = session.lock().await;
    Ok(Json(s.push(LogEntry::Clock { time })?))
}

async fn post_stoppage(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<StoppageRequest>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let session = app.session(&id)?;
    let Json(req) = body?;
    let mut s = session.lock().await;
    Ok(Json(s.push(LogEntry::Stoppage { half: req.half, minutes: req.minutes })?))
}

async fn undo(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionView>> {
    let session = app.session(&id)?;
    let mut s = session.lock().await;
    if s.log.undo().is_none() {
        return Err(ApiError::new(StatusCode::CONFLICT, "empty_log", "nothing to undo"));
    }
    s.write(&JournalLine::Undo)?;
    Ok(Json(s.view()?))
}

/// The minute an event reported "now" falls in: the one containing the
/// clock, or the next one when the clock sits on a minute boundary.
fn current_minute(state: &MatchState) -> MatchTime {
    MatchTime::of_clock(state.clock + 1e-9, state.u1)
}

async fn get_forecast(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    query: Result<Query<ForecastQuery>, QueryRejection>,
) -> ApiResult<Json<ForecastResponse>> {
    let session = app.session(&id)?;
    let Query(q) = query?;
    let mut s = session.lock().await;
    let n = q.n.unwrap_or(s.default_n);
    check_n(n)?;
    let seed = q.seed.unwrap_or_else(rand::random);
    let current = s.log.state()?;
    let what_if = match q.what_if {
        None => {
            if q.half.is_some() || q.minute.is_some() || q.stoppage_offset.is_some() {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "invalid_query",
                    "a time was given without a what_if event",
                ));
            }
            None
        }
        Some(event_type) => {
            let now = current_minute(&current);
            let time = MatchTime {
                half: q.half.unwrap_or(now.half),
                minute: q.minute.unwrap_or(now.minute),
                stoppage_offset: q.stoppage_offset.unwrap_or(if q.minute.is_some() { 0 } else { now.stoppage_offset }),
            };
            Some(LogEntry::Event { event_type, time })
        }
    };
    let state = match &what_if {
        Some(entry) => s.log.preview(entry)?,
        None => current,
    };
    let model = Arc::clone(&s.model);
    let initial = state.clone();
    let distribution = tokio::task::spawn_blocking(move || model.simulate_many(&initial, n, seed))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let time = MatchTime::of_clock(state.clock, state.u1);
    let events = s.log.events()?;
    let events_used = events.len() + usize::from(what_if.is_some());
    let top_scores = distribution.top_scores(5);
    if what_if.is_none() {
        let point = HistoryPoint {
            sequence: s.history.len(),
            clock: state.clock,
            time,
            seed,
            n,
            home_goals: state.home_goals,
            away_goals: state.away_goals,
            result_probs: distribution.result_probs,
            expected_goals: distribution.expected_goals,
            top_scores: top_scores.clone(),
        };
        s.write(&JournalLine::Forecast { point: point.clone() })?;
        s.history.push(point);
    }
    Ok(Json(ForecastResponse {
        session_id: s.id,
        model: s.model_name.clone(),
        seed,
        n,
        cutoff: Cutoff { clock: state.clock, time, events_used, log_length: s.log.entries.len() },
        state,
        what_if,
        result_probs: distribution.result_probs,
        expected_goals: distribution.expected_goals,
        top_scores,
        distribution,
    }))
}

async fn get_history(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<History>> {
    let session = app.session(&id)?;
    let s = session.lock().await;
    let events = s
        .log
        .events()?
        .into_iter()
        .map(|(event_type, time, clock)| HistoryEvent { event_type, time, clock })
        .collect();
    let mut forecasts = s.history.clone();
    forecasts.sort_by(|a, b| a.clock.total_cmp(&b.clock).then(a.sequence.cmp(&b.sequence)));
    Ok(Json(History {
        session_id: s.id,
        fixture: s.log.fixture.clone(),
        entries: s.log.entries.clone(),
        events,
        forecasts,
    }))
}
