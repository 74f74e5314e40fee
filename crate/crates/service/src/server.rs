use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequestParts, Query, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use biaseval_core::bws::{self, Judgment, Tuple};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::config::{AnnotatorConfig, ServiceConfig};
use crate::log::{EventLog, LogError};
use crate::state::{AnnotationState, Event, PairExport, PartnerAgreement, Rejection, TupleStatus};
use crate::ServiceError;

/// Labels shown to annotators instead of text ids, which encode the country.
pub const LABELS: [&str; 4] = ["A", "B", "C", "D"];

/// `{code, reason}` error body with its HTTP status.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub reason: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, reason: impl Into<String>) -> Self {
        Self {
            status,
            code,
            reason: reason.into(),
        }
    }

    fn internal(e: LogError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl From<Rejection> for ApiError {
    fn from(r: Rejection) -> Self {
        let status = match r {
            Rejection::UnknownTuple(_) => StatusCode::NOT_FOUND,
            Rejection::DistinctRequired | Rejection::NotInTuple(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::CONFLICT,
        };
        Self::new(status, r.code(), r.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            reason: self.reason,
        };
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextView {
    /// Position label, `A`–`D`.
    pub id: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleView {
    pub tuple_id: u32,
    pub round: u32,
    pub texts: Vec<TextView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextTuple {
    pub done: bool,
    pub tuple: Option<TupleView>,
}

/// Body of `POST /api/judgment` and `POST /api/arbitration`; ids are the
/// position labels from the tuple view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub tuple_id: u32,
    pub best_id: String,
    pub worst_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accepted {
    pub accepted: bool,
    pub arbitration_opened: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentView {
    pub annotator_id: String,
    pub best_id: String,
    pub worst_id: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbitrationView {
    pub tuple: TupleView,
    pub judgments: Vec<JudgmentView>,
    pub resolution: Option<JudgmentView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextArbitration {
    pub idle: bool,
    pub item: Option<ArbitrationView>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overall {
    pub tuples: usize,
    pub pending: usize,
    pub agreed: usize,
    pub conflict: usize,
    pub arbitrated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub annotator_id: String,
    pub round: Option<u32>,
    /// Tuples in the annotator's round (all rounds when unassigned).
    pub total: usize,
    pub served: usize,
    pub completed: usize,
    pub done: bool,
    pub partner: Option<String>,
    pub shared: usize,
    pub kappa_vs_partner: Option<f64>,
    pub arbitration_open: usize,
    pub overall: Overall,
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    #[serde(default)]
    pub format: Option<String>,
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

struct Writer {
    state: AnnotationState,
    log: EventLog,
}

struct Inner {
    writer: Mutex<Writer>,
    current: ArcSwap<AnnotationState>,
    bodies: HashMap<String, String>,
    sessions: HashMap<String, AnnotatorConfig>,
    clock: Clock,
}

/// Shared handle to the annotation service; cheap to clone.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

impl Service {
    /// Builds the service, replaying any log found in `data_dir`.
    pub fn new(
        tuples: Vec<Tuple>,
        bodies: HashMap<String, String>,
        config: ServiceConfig,
        data_dir: Option<&std::path::Path>,
    ) -> Result<Self, ServiceError> {
        config.validate()?;
        for t in &tuples {
            if t.text_ids.len() > LABELS.len() {
                return Err(ServiceError::TupleTooLarge(t.tuple_id));
            }
            if let Some(id) = t.text_ids.iter().find(|id| !bodies.contains_key(*id)) {
                return Err(ServiceError::MissingText(id.clone()));
            }
        }
        let (state, log) = match data_dir {
            Some(dir) => EventLog::open(dir, tuples, config.snapshot_every)?,
            None => (AnnotationState::new(tuples).map_err(LogError::from)?, EventLog::in_memory()),
        };
        let sessions = config.annotators.into_iter().map(|a| (a.token.clone(), a)).collect();
        Ok(Self {
            inner: Arc::new(Inner {
                current: ArcSwap::from_pointee(state.clone()),
                writer: Mutex::new(Writer { state, log }),
                bodies,
                sessions,
                clock: Arc::new(Utc::now),
            }),
        })
    }

    /// Replaces the timestamp source (must be called before cloning).
    pub fn with_clock(mut self, clock: Clock) -> Self {
        Arc::get_mut(&mut self.inner)
            .expect("with_clock called on a shared service")
            .clock = clock;
        self
    }

    /// Latest published state; lock-free.
    pub fn state(&self) -> Arc<AnnotationState> {
        self.inner.current.load_full()
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/api/tuple/next", get(next_tuple))
            .route("/api/judgment", post(submit_judgment))
            .route("/api/progress", get(progress))
            .route("/api/arbitration/next", get(next_arbitration))
            .route("/api/arbitration", post(submit_arbitration))
            .route("/api/export/pairs", get(export_pairs))
            .with_state(self.clone())
    }

    pub fn session(&self, token: &str) -> Result<&AnnotatorConfig, ApiError> {
        self.inner
            .sessions
            .get(token)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-session", "no annotator holds this token"))
    }

    /// Serializes one event through the log and publishes the new state.
    fn commit(&self, event: Event) -> Result<crate::state::Applied, ApiError> {
        let mut w = self.inner.writer.lock().unwrap_or_else(|p| p.into_inner());
        let Writer { state, log } = &mut *w;
        let applied = log.commit(state, event).map_err(ApiError::internal)??;
        self.inner.current.store(Arc::new(state.clone()));
        Ok(applied)
    }

    fn view(&self, tuple: &Tuple) -> TupleView {
        TupleView {
            tuple_id: tuple.tuple_id,
            round: tuple.round,
            texts: tuple
                .text_ids
                .iter()
                .zip(LABELS)
                .map(|(id, label)| TextView {
                    id: label.to_string(),
                    body: self.inner.bodies[id].clone(),
                })
                .collect(),
        }
    }

    fn judgment_view(tuple: &Tuple, j: &Judgment) -> JudgmentView {
        let (b, w) = bws::judgment_label(j, tuple);
        JudgmentView {
            annotator_id: j.annotator_id.clone(),
            best_id: LABELS[b].to_string(),
            worst_id: LABELS[w].to_string(),
            timestamp: j.timestamp,
        }
    }

    pub fn next_tuple(&self, who: &AnnotatorConfig) -> Result<NextTuple, ApiError> {
        let snapshot = self.state();
        let Some(id) = snapshot.next_for(&who.annotator_id, who.round) else {
            return Ok(NextTuple { done: true, tuple: None });
        };
        let id = if snapshot.needs_serving(&who.annotator_id, id) {
            let mut w = self.inner.writer.lock().unwrap_or_else(|p| p.into_inner());
            let Writer { state, log } = &mut *w;
            // Another annotator may have taken the slot meanwhile.
            let Some(id) = state.next_for(&who.annotator_id, who.round) else {
                return Ok(NextTuple { done: true, tuple: None });
            };
            if state.needs_serving(&who.annotator_id, id) {
                let served = Event::Served {
                    tuple_id: id,
                    annotator_id: who.annotator_id.clone(),
                };
                log.commit(state, served).map_err(ApiError::internal)??;
                self.inner.current.store(Arc::new(state.clone()));
            }
            id
        } else {
            id
        };
        let state = self.state();
        Ok(NextTuple {
            done: false,
            tuple: Some(self.view(state.tuple(id).expect("served tuple exists"))),
        })
    }

    fn to_judgment(&self, who: &AnnotatorConfig, s: &Submission) -> Result<Judgment, ApiError> {
        let state = self.state();
        let tuple = state.tuple(s.tuple_id).ok_or(Rejection::UnknownTuple(s.tuple_id))?;
        if s.best_id == s.worst_id {
            return Err(Rejection::DistinctRequired.into());
        }
        let resolve = |label: &str| {
            LABELS
                .iter()
                .position(|l| *l == label)
                .and_then(|i| tuple.text_ids.get(i))
                .cloned()
                .ok_or_else(|| Rejection::NotInTuple(label.to_string()))
        };
        Ok(Judgment {
            tuple_id: s.tuple_id,
            annotator_id: who.annotator_id.clone(),
            best_id: resolve(&s.best_id)?,
            worst_id: resolve(&s.worst_id)?,
            timestamp: (self.inner.clock)(),
        })
    }

    pub fn submit(&self, who: &AnnotatorConfig, s: &Submission) -> Result<Accepted, ApiError> {
        let judgment = self.to_judgment(who, s)?;
        if let (Some(assigned), Some(t)) = (who.round, self.state().tuple(s.tuple_id)) {
            if t.round != assigned {
                return Err(Rejection::WrongRound {
                    tuple_id: t.tuple_id,
                    round: t.round,
                    assigned,
                }
                .into());
            }
        }
        let applied = self.commit(Event::Judged(judgment))?;
        Ok(Accepted {
            accepted: true,
            arbitration_opened: applied.arbitration_opened,
        })
    }

    pub fn next_arbitration(&self, who: &AnnotatorConfig) -> NextArbitration {
        let state = self.state();
        let item = state.arbitration_for(&who.annotator_id).map(|id| {
            let tuple = state.tuple(id).expect("queued tuple exists");
            let rec = state.record(id).expect("queued tuple has a record");
            ArbitrationView {
                tuple: self.view(tuple),
                judgments: rec.primaries.iter().map(|j| Self::judgment_view(tuple, j)).collect(),
                resolution: rec.arbitration.as_ref().map(|j| Self::judgment_view(tuple, j)),
            }
        });
        NextArbitration {
            idle: item.is_none(),
            item,
        }
    }

    pub fn arbitrate(&self, who: &AnnotatorConfig, s: &Submission) -> Result<Accepted, ApiError> {
        let judgment = self.to_judgment(who, s)?;
        self.commit(Event::Arbitrated(judgment))?;
        Ok(Accepted {
            accepted: true,
            arbitration_opened: false,
        })
    }

    pub fn progress(&self, who: &AnnotatorConfig) -> Progress {
        let state = self.state();
        let me = who.annotator_id.as_str();
        let counts = state.status_counts();
        let count = |s| counts.get(&s).copied().unwrap_or(0);
        let partner: Option<PartnerAgreement> = state.partner_agreement(me);
        let arbitration_open = state
            .records()
            .iter()
            .filter(|r| r.status() == TupleStatus::Conflict && r.primaries.iter().all(|j| j.annotator_id != me))
            .count();
        Progress {
            annotator_id: me.to_string(),
            round: who.round,
            total: state.total_for(who.round),
            served: state.served_to(me).len(),
            completed: state.completed_by(me),
            done: state.next_for(me, who.round).is_none(),
            shared: partner.as_ref().map_or(0, |p| p.shared),
            kappa_vs_partner: partner.as_ref().map(|p| p.kappa),
            partner: partner.map(|p| p.partner),
            arbitration_open,
            overall: Overall {
                tuples: state.tuples().len(),
                pending: count(TupleStatus::Pending),
                agreed: count(TupleStatus::Agreed),
                conflict: count(TupleStatus::Conflict),
                arbitrated: count(TupleStatus::Arbitrated),
            },
        }
    }

    pub fn export(&self) -> PairExport {
        self.state().export()
    }
}

/// Authenticated annotator, from `Authorization: Bearer <token>`.
pub struct Session(pub AnnotatorConfig);

impl FromRequestParts<Service> for Session {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, service: &Service) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing bearer token"))?;
        service.session(token).cloned().map(Session)
    }
}

async fn next_tuple(State(s): State<Service>, Session(who): Session) -> Result<Json<NextTuple>, ApiError> {
    s.next_tuple(&who).map(Json)
}

async fn submit_judgment(
    State(s): State<Service>,
    Session(who): Session,
    body: Result<Json<Submission>, JsonRejection>,
) -> Result<Json<Accepted>, ApiError> {
    s.submit(&who, &body?.0).map(Json)
}

async fn progress(State(s): State<Service>, Session(who): Session) -> Json<Progress> {
    Json(s.progress(&who))
}

async fn next_arbitration(State(s): State<Service>, Session(who): Session) -> Json<NextArbitration> {
    Json(s.next_arbitration(&who))
}

async fn submit_arbitration(
    State(s): State<Service>,
    Session(who): Session,
    body: Result<Json<Submission>, JsonRejection>,
) -> Result<Json<Accepted>, ApiError> {
    s.arbitrate(&who, &body?.0).map(Json)
}

async fn export_pairs(
    State(s): State<Service>,
    Session(_): Session,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let export = s.export();
    let mut headers = HeaderMap::new();
    for (name, v) in [
        ("x-resolved-count", export.resolved),
        ("x-unresolved-count", export.unresolved),
        ("x-pending-count", export.pending),
    ] {
        headers.insert(name, HeaderValue::from(v));
    }
    match q.format.as_deref() {
        None | Some("csv") => {
            let mut buf = Vec::new();
            bws::write_pairs_csv(&export.pairs, &mut buf)
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
            headers.insert(CONTENT_TYPE, HeaderValue::from_static("text/csv; charset=utf-8"));
            Ok((headers, buf).into_response())
        }
        Some("json") => Ok((headers, Json(export)).into_response()),
        Some(other) => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad-request",
            format!("unknown export format `{other}` (csv or json)"),
        )),
    }
}
