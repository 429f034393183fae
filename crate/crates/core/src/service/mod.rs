//! HTTP session API.
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | POST | `/sessions` | `{"stop_s"?, "max_questions"?, "mode"?, "questions"?, "k"?}` | [`SessionView`] |
//! | POST | `/sessions/{id}/answers` | `{"question_id", "answer_id"}` | [`SessionView`] |
//! | GET | `/sessions/{id}/next-question` | | [`NextQuestionView`] |
//! | GET | `/sessions/{id}/recommendations` | `?k=` | [`RecommendationsView`] |
//!
//! Errors are `{"error": code, "message": text}` with status 400 (invalid
//! config or answer), 404 (unknown session) or 409 (answer to a question that
//! is not the one currently posed, or session no longer active).
//!
//! The protocol is strictly sequential: the server poses one question at a
//! time and only accepts an answer to that question.

mod store;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub use store::{Event, EventStore};

use crate::adaptive::{next_question, rank, Decision, StopReason, StoppingConfig};
use crate::catalog::QuestionIdx;
use crate::error::Error;
use crate::inference::{init_session, retained, update_with, ContradictionMode, ConversationState};
use crate::model::Model;

const DEFAULT_K: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Stopped,
    Contradiction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: Uuid,
    pub config: StoppingConfig,
    /// Questions this session may ask, in catalogue order.
    pub pool: Vec<QuestionIdx>,
    pub state: ConversationState,
    pub status: Status,
    /// Question currently posed; `None` once the session has stopped.
    pub pending: Option<QuestionIdx>,
    pub stop_reason: Option<StopReason>,
    pub created_ms: u64,
    pub updated_ms: u64,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::StopOutOfRange { .. } | Error::InvalidEss(_) => (StatusCode::BAD_REQUEST, "invalid_config"),
            Error::Unknown { .. } | Error::UnknownAnswer { .. } => (StatusCode::BAD_REQUEST, "unknown_answer"),
            Error::RepeatedQuestion(_) => (StatusCode::CONFLICT, "stale_question"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body<'a> {
            error: &'a str,
            message: &'a str,
        }
        let body = Json(Body {
            error: self.code,
            message: &self.message,
        });
        (self.status, body).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateRequest {
    #[serde(default)]
    pub stop_s: Option<usize>,
    #[serde(default)]
    pub max_questions: Option<usize>,
    #[serde(default)]
    pub mode: Option<ContradictionMode>,
    /// Restricts the session to these question ids; all questions by default.
    #[serde(default)]
    pub questions: Option<Vec<String>>,
    /// Number of recommendations in responses.
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub question_id: String,
    pub answer_id: String,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerView {
    pub id: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub id: String,
    pub prompt: String,
    pub answers: Vec<AnswerView>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub id: String,
    pub label: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: Uuid,
    pub status: Status,
    pub question: Option<QuestionView>,
    pub stop_reason: Option<StopReason>,
    /// Normalized posterior entropy in `[0, 1]`.
    pub entropy: f64,
    pub nri: usize,
    pub n_items: usize,
    pub answered: usize,
    pub contradiction: bool,
    pub recommendations: Vec<RecommendationView>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NextQuestionView {
    pub session_id: Uuid,
    pub status: Status,
    pub question: Option<QuestionView>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationsView {
    pub session_id: Uuid,
    pub status: Status,
    /// True while the session is still active.
    pub interim: bool,
    pub contradiction: bool,
    pub items: Vec<RecommendationView>,
}

#[derive(Debug, Deserialize)]
pub struct KQuery {
    pub k: Option<usize>,
}

/// Shared service state: the model plus live sessions.
#[derive(Debug)]
pub struct AppState {
    model: Arc<Model>,
    sessions: RwLock<HashMap<Uuid, Arc<Mutex<Session>>>>,
    store: Option<EventStore>,
}

impl AppState {
    pub fn new(model: Arc<Model>) -> AppState {
        AppState {
            model,
            sessions: RwLock::new(HashMap::new()),
            store: None,
        }
    }

    /// State backed by an event log. Sessions already recorded in the log are
    /// rebuilt by replaying their events.
    pub fn with_store(model: Arc<Model>, store: EventStore) -> crate::Result<AppState> {
        let events = store.read_all()?;
        let state = AppState {
            model,
            sessions: RwLock::new(HashMap::new()),
            store: Some(store),
        };
        let mut rebuilt: HashMap<Uuid, Session> = HashMap::new();
        let mut order = Vec::new();
        for event in events {
            match event {
                Event::Created {
                    session,
                    config,
                    questions,
                    at_ms,
                } => {
                    let pool = state.pool(questions.as_deref())?;
                    rebuilt.insert(session, state.start(session, config, pool, at_ms)?);
                    order.push(session);
                }
                Event::Answered {
                    session,
                    question_id,
                    answer_id,
                    at_ms,
                } => {
                    let s = rebuilt.get_mut(&session).ok_or_else(|| Error::Log {
                        line: 0,
                        message: format!("answer for unknown session {session}"),
                    })?;
                    let (q, a) = state.model.catalog().answer_ref(&question_id, &answer_id)?;
                    state.advance(s, q, a, at_ms).map_err(|e| Error::Log {
                        line: 0,
                        message: e.message,
                    })?;
                }
                Event::Snapshot {
                    session,
                    status,
                    state: snapshot,
                    ..
                } => {
                    if let Some(s) = rebuilt.get_mut(&session) {
                        s.state = snapshot;
                        s.status = status;
                    }
                }
            }
        }
        {
            let mut map = state.sessions.write().unwrap_or_else(|e| e.into_inner());
            for id in order {
                if let Some(s) = rebuilt.remove(&id) {
                    map.insert(id, Arc::new(Mutex::new(s)));
                }
            }
        }
        Ok(state)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn session(&self, id: &Uuid) -> Option<Session> {
        let map = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        map.get(id).map(|s| s.lock().unwrap_or_else(|e| e.into_inner()).clone())
    }

    pub fn session_ids(&self) -> Vec<Uuid> {
        let map = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        map.keys().copied().collect()
    }

    fn record(&self, event: &Event) -> std::result::Result<(), ApiError> {
        if let Some(store) = &self.store {
            store.append(event).map_err(ApiError::from)?;
        }
        Ok(())
    }

    fn pool(&self, questions: Option<&[String]>) -> crate::Result<Vec<QuestionIdx>> {
        let catalog = self.model.catalog();
        match questions {
            None => Ok(catalog.question_indices().collect()),
            Some(ids) => {
                let mut pool = ids.iter().map(|id| catalog.question_index(id)).collect::<crate::Result<Vec<_>>>()?;
                pool.sort();
                pool.dedup();
                Ok(pool)
            }
        }
    }

    fn start(&self, id: Uuid, config: StoppingConfig, pool: Vec<QuestionIdx>, at_ms: u64) -> crate::Result<Session> {
        config.threshold(self.model.n_items())?;
        let mut session = Session {
            id,
            config,
            pool,
            state: init_session(&self.model),
            status: Status::Active,
            pending: None,
            stop_reason: None,
            created_ms: at_ms,
            updated_ms: at_ms,
        };
        self.decide(&mut session)?;
        Ok(session)
    }

    fn decide(&self, session: &mut Session) -> crate::Result<()> {
        let unasked: Vec<QuestionIdx> = session
            .pool
            .iter()
            .copied()
            .filter(|q| !session.state.is_answered(*q))
            .collect();
        match next_question(&self.model, &session.state, &unasked, &session.config)? {
            Decision::Ask { question, .. } => {
                session.pending = Some(question);
                session.status = Status::Active;
            }
            Decision::Stop(reason) => {
                session.pending = None;
                session.stop_reason = Some(reason);
                session.status = if reason == StopReason::Contradiction {
                    Status::Contradiction
                } else {
                    Status::Stopped
                };
            }
        }
        Ok(())
    }

    fn advance(&self, session: &mut Session, question: QuestionIdx, answer: usize, at_ms: u64) -> std::result::Result<(), ApiError> {
        if session.status != Status::Active {
            return Err(ApiError::new(StatusCode::CONFLICT, "session_finished", "session is no longer active"));
        }
        if session.pending != Some(question) {
            let posed = session
                .pending
                .map(|q| self.model.catalog().question(q).id.clone())
                .unwrap_or_default();
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "stale_question",
                format!(
                    "question `{}` is not the one posed (`{posed}`)",
                    self.model.catalog().question(question).id
                ),
            ));
        }
        session.state = update_with(&self.model, &session.state, question, answer, session.config.mode)?;
        session.updated_ms = at_ms;
        self.decide(session)?;
        Ok(())
    }

    fn recommendations(&self, session: &Session, k: usize) -> Vec<RecommendationView> {
        let catalog = self.model.catalog();
        rank(&self.model, &session.state.posterior)
            .into_iter()
            .take(k)
            .map(|r| RecommendationView {
                label: catalog.item(r.item).label.clone(),
                id: r.id,
                probability: r.probability,
            })
            .collect()
    }

    fn question_view(&self, q: Option<QuestionIdx>) -> Option<QuestionView> {
        q.map(|q| {
            let question = self.model.catalog().question(q);
            QuestionView {
                id: question.id.clone(),
                prompt: question.prompt.clone(),
                answers: question
                    .answers
                    .iter()
                    .map(|a| AnswerView {
                        id: a.id.clone(),
                        label: a.label.clone(),
                    })
                    .collect(),
            }
        })
    }

    fn view(&self, session: &Session, k: usize) -> SessionView {
        SessionView {
            session_id: session.id,
            status: session.status,
            question: self.question_view(session.pending),
            stop_reason: session.stop_reason,
            entropy: session.state.entropy(),
            nri: retained(&session.state).count,
            n_items: self.model.n_items(),
            answered: session.state.n_answered(),
            contradiction: session.state.contradiction,
            recommendations: self.recommendations(session, k),
        }
    }

    fn get(&self, id: &str) -> std::result::Result<Arc<Mutex<Session>>, ApiError> {
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::not_found(id))?;
        let map = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        map.get(&uuid).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    pub fn create(&self, request: &CreateRequest) -> std::result::Result<SessionView, ApiError> {
        let config = StoppingConfig {
            stop_s: request.stop_s,
            max_questions: request.max_questions,
            mode: request.mode.unwrap_or_default(),
        };
        let id = Uuid::new_v4();
        let at_ms = now_ms();
        let pool = self
            .pool(request.questions.as_deref())
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_config", e.to_string()))?;
        let session = self.start(id, config, pool, at_ms)?;
        self.record(&Event::Created {
            session: id,
            config,
            questions: request.questions.clone(),
            at_ms,
        })?;
        self.snapshot_if_done(&session)?;
        let view = self.view(&session, request.k.unwrap_or(DEFAULT_K));
        let mut map = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        map.insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    fn snapshot_if_done(&self, session: &Session) -> std::result::Result<(), ApiError> {
        if session.status != Status::Active {
            self.record(&Event::Snapshot {
                session: session.id,
                status: session.status,
                state: session.state.clone(),
                at_ms: session.updated_ms,
            })?;
        }
        Ok(())
    }

    pub fn answer(&self, id: &str, request: &AnswerRequest) -> std::result::Result<SessionView, ApiError> {
        let handle = self.get(id)?;
        let mut session = handle.lock().unwrap_or_else(|e| e.into_inner());
        let (q, a) = self
            .model
            .catalog()
            .answer_ref(&request.question_id, &request.answer_id)
            .map_err(ApiError::from)?;
        let at_ms = now_ms();
        let mut next = session.clone();
        self.advance(&mut next, q, a, at_ms)?;
        self.record(&Event::Answered {
            session: next.id,
            question_id: request.question_id.clone(),
            answer_id: request.answer_id.clone(),
            at_ms,
        })?;
        self.snapshot_if_done(&next)?;
        *session = next;
        Ok(self.view(&session, request.k.unwrap_or(DEFAULT_K)))
    }

    pub fn next_question(&self, id: &str) -> std::result::Result<NextQuestionView, ApiError> {
        let handle = self.get(id)?;
        let session = handle.lock().unwrap_or_else(|e| e.into_inner());
        Ok(NextQuestionView {
            session_id: session.id,
            status: session.status,
            question: self.question_view(session.pending),
        })
    }

    pub fn recommendations_view(&self, id: &str, k: Option<usize>) -> std::result::Result<RecommendationsView, ApiError> {
        let handle = self.get(id)?;
        let session = handle.lock().unwrap_or_else(|e| e.into_inner());
        Ok(RecommendationsView {
            session_id: session.id,
            status: session.status,
            interim: session.status == Status::Active,
            contradiction: session.state.contradiction,
            items: self.recommendations(&session, k.unwrap_or(DEFAULT_K)),
        })
    }
}

async fn create_session(State(app): State<Arc<AppState>>, body: Option<Json<CreateRequest>>) -> ApiResult<SessionView> {
    let request = body.map(|Json(b)| b).unwrap_or_default();
    app.create(&request).map(Json)
}

async fn post_answer(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<AnswerRequest>,
) -> ApiResult<SessionView> {
    app.answer(&id, &body).map(Json)
}

async fn get_next_question(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<NextQuestionView> {
    app.next_question(&id).map(Json)
}

async fn get_recommendations(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<KQuery>,
) -> ApiResult<RecommendationsView> {
    app.recommendations_view(&id, query.k).map(Json)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/answers", post(post_answer))
        .route("/sessions/{id}/next-question", get(get_next_question))
        .route("/sessions/{id}/recommendations", get(get_recommendations))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: &str, state: Arc<AppState>) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
