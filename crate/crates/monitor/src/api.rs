//! HTTP interface. `POST /api/v1/events` is open so engines can report
//! without credentials; everything under `/api/v1/labs` needs the
//! instructor token when one is configured.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration as StdDuration;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Duration;
use futures_util::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use serde_json::json;
use ta_core::analytics::{group_solutions, Distance, Submission};
use ta_core::event::{EventType, WireEvent};
use tokio::sync::broadcast::error::RecvError;

use crate::state::{grade_export, known_levels, level_statistics, parse_scheme, stuck_students, StudentState, Thresholds};
use crate::store::{Monitor, StoreError};

#[derive(Clone)]
pub struct AppState {
    pub monitor: Arc<Monitor>,
    pub token: Option<String>,
    pub thresholds: Thresholds,
}

pub fn router(state: AppState) -> Router {
    let instructor = Router::new()
        .route("/api/v1/labs", get(labs))
        .route("/api/v1/labs/{lab}/snapshot", get(snapshot))
        .route("/api/v1/labs/{lab}/students/{user}/history", get(history))
        .route("/api/v1/labs/{lab}/stats", get(stats))
        .route("/api/v1/labs/{lab}/stuck", get(stuck))
        .route("/api/v1/labs/{lab}/ack", post(ack))
        .route("/api/v1/labs/{lab}/grades.csv", get(grades))
        .route("/api/v1/labs/{lab}/stream", get(stream_updates))
        .route("/api/v1/labs/{lab}/levels/{level}/clusters", get(clusters))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/api/v1/events", post(ingest))
        .route("/healthz", get(|| async { "ok" }))
        .merge(instructor)
        .with_state(state)
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::BadLabId(_) => ApiError(StatusCode::BAD_REQUEST, e.to_string()),
            StoreError::Io(_) => ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

/// Accepts `Authorization: Bearer <token>`, or `?token=` for browser
/// event streams, which cannot set headers.
async fn require_token(
    State(state): State<AppState>,
    Query(q): Query<TokenQuery>,
    headers: HeaderMap,
    request: Request,
    next: Next,
) -> Response {
    let Some(expected) = state.token.as_deref() else {
        return next.run(request).await;
    };
    let bearer = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if bearer == Some(expected) || q.token.as_deref() == Some(expected) {
        next.run(request).await
    } else {
        ApiError(StatusCode::UNAUTHORIZED, "missing or wrong instructor token".into()).into_response()
    }
}

async fn ingest(State(state): State<AppState>, body: axum::body::Bytes) -> Result<Json<serde_json::Value>, ApiError> {
    let wire: WireEvent =
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("bad event JSON: {e}")))?;
    let event = wire
        .into_event(state.monitor.now())
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    if event.event_type == EventType::Ack {
        return Err(ApiError(StatusCode::BAD_REQUEST, "acks are sent through the lab ack endpoint".into()));
    }
    let id = event.event_id;
    let status = state.monitor.ingest(event)?;
    Ok(Json(json!({ "status": status, "event_id": id })))
}

async fn labs(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(state.monitor.lab_ids())
}

#[derive(Serialize)]
struct StudentView {
    #[serde(flatten)]
    state: StudentState,
    idle_seconds: Option<i64>,
    levels_passed_count: usize,
}

#[derive(Serialize)]
struct Snapshot {
    lab_id: String,
    generated_at: chrono::DateTime<chrono::Utc>,
    students: Vec<StudentView>,
}

async fn snapshot(State(state): State<AppState>, Path(lab): Path<String>) -> Json<Snapshot> {
    let now = state.monitor.now();
    let students = state
        .monitor
        .snapshot(&lab)
        .into_iter()
        .map(|s| StudentView {
            idle_seconds: s.idle(now).map(|d| d.num_seconds()),
            levels_passed_count: s.levels_passed.len(),
            state: s,
        })
        .collect();
    Json(Snapshot {
        lab_id: lab,
        generated_at: now,
        students,
    })
}

async fn history(State(state): State<AppState>, Path((lab, user)): Path<(String, String)>) -> impl IntoResponse {
    Json(state.monitor.history(&lab, &user))
}

#[derive(Deserialize)]
struct ThresholdQuery {
    idle_minutes: Option<i64>,
    attempts: Option<u32>,
}

impl ThresholdQuery {
    fn apply(&self, base: Thresholds) -> Thresholds {
        Thresholds {
            idle: self.idle_minutes.map_or(base.idle, Duration::minutes),
            attempts: self.attempts.unwrap_or(base.attempts),
        }
    }
}

async fn stats(State(state): State<AppState>, Path(lab): Path<String>, Query(q): Query<ThresholdQuery>) -> impl IntoResponse {
    let log = state.monitor.log(&lab);
    Json(level_statistics(&log, state.monitor.now(), q.apply(state.thresholds)))
}

async fn stuck(State(state): State<AppState>, Path(lab): Path<String>, Query(q): Query<ThresholdQuery>) -> impl IntoResponse {
    let students = state.monitor.snapshot(&lab);
    Json(stuck_students(&students, state.monitor.now(), q.apply(state.thresholds)))
}

#[derive(Deserialize)]
struct AckBody {
    user: String,
}

async fn ack(
    State(state): State<AppState>,
    Path(lab): Path<String>,
    Json(body): Json<AckBody>,
) -> Result<impl IntoResponse, ApiError> {
    match state.monitor.acknowledge(&lab, &body.user)? {
        Some(event) => Ok(Json(event)),
        None => Err(ApiError(StatusCode::NOT_FOUND, format!("no student `{}` in lab `{lab}`", body.user))),
    }
}

#[derive(Deserialize)]
struct GradeQuery {
    scheme: Option<String>,
}

/// Without a scheme every level the lab has seen is worth one point.
async fn grades(
    State(state): State<AppState>,
    Path(lab): Path<String>,
    Query(q): Query<GradeQuery>,
) -> Result<impl IntoResponse, ApiError> {
    let log = state.monitor.log(&lab);
    let scheme = match q.scheme.as_deref() {
        Some(text) => parse_scheme(text).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?,
        None => known_levels(&log).into_iter().map(|l| (l, 1)).collect(),
    };
    let csv = grade_export(&log, &scheme).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv))
}

/// Server-sent events: one `update` per accepted event in the lab, carrying
/// the event and the student's new state.
async fn stream_updates(
    State(state): State<AppState>,
    Path(lab): Path<String>,
) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let rx = state.monitor.subscribe();
    let updates = stream::unfold((rx, lab), |(mut rx, lab)| async move {
        loop {
            match rx.recv().await {
                Ok(update) if update.lab_id == lab => {
                    let event = SseEvent::default()
                        .event("update")
                        .json_data(&update)
                        .unwrap_or_else(|_| SseEvent::default().event("update"));
                    return Some((Ok(event), (rx, lab)));
                }
                Ok(_) => {}
                // The client missed some updates; tell it to refetch the snapshot.
                Err(RecvError::Lagged(_)) => return Some((Ok(SseEvent::default().event("resync").data("{}")), (rx, lab))),
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(updates).keep_alive(KeepAlive::new().interval(StdDuration::from_secs(15)))
}

#[derive(Deserialize)]
struct ClusterQuery {
    k: Option<usize>,
    distance: Option<String>,
    seed: Option<u64>,
    include_failures: Option<bool>,
}

async fn clusters(
    State(state): State<AppState>,
    Path((lab, level)): Path<(String, String)>,
    Query(q): Query<ClusterQuery>,
) -> Result<impl IntoResponse, ApiError> {
    let distance: Distance = q
        .distance
        .as_deref()
        .unwrap_or("jaccard")
        .parse()
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e))?;
    let include_failures = q.include_failures.unwrap_or(false);
    let submissions: Vec<Submission> = state
        .monitor
        .log(&lab)
        .into_iter()
        .filter(|e| e.level_id == level && !e.command_text.trim().is_empty())
        .filter(|e| e.event_type == EventType::Passed || (include_failures && e.event_type == EventType::Command))
        .map(|e| Submission {
            user: e.user,
            level: e.level_id,
            command: e.command_text,
        })
        .collect();
    if submissions.is_empty() {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("no solutions recorded for level `{level}`")));
    }
    let k = q.k.unwrap_or(2);
    let seed = q.seed.unwrap_or(0);
    let groups = tokio::task::spawn_blocking(move || group_solutions(&submissions, k, distance, seed))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    Ok(Json(groups))
}
