//! HTTP API for the proctor console and the in-page capture script.
//!
//! Every exam response carries the config revision it was computed under.

pub mod capture;
pub mod error;
pub mod state;

use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use proctor_core::analytics::{
    behavior_timeline, dwell_grid, peer_context, BehaviorTimeline, DwellGrid, GridDims, PeerContext,
    QuestionCohortStats, StudentRiskOverview, DEFAULT_HISTOGRAM_BINS,
};
use proctor_core::report::StudentOrder;
use proctor_core::{ConfigPatch, DetectionConfig, MouseEvent, QuestionRiskProfile};
use serde::{Deserialize, Serialize};

pub use capture::{CaptureAck, CaptureBatch};
pub use error::ApiError;
pub use state::{AppState, ExamSnapshot, ExamSummary};

use crate::state::ExamSnapshot as Snapshot;

pub const DEFAULT_MAX_POINTS: usize = 500;

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/exams", get(list_exams))
        .route("/exams/{exam_id}/load", post(load_exam))
        .route("/exams/{exam_id}/config", put(update_config).get(get_config))
        .route("/exams/{exam_id}/students", get(student_list))
        .route("/exams/{exam_id}/students/{student_id}/questions", get(question_list))
        .route("/exams/{exam_id}/students/{student_id}/questions/{question_id}/behavior", get(behavior))
        .route("/exams/{exam_id}/students/{student_id}/questions/{question_id}/playback", get(playback))
        .route("/exams/{exam_id}/students/{student_id}/video", get(video))
        .route("/sessions/{token}/events", post(post_events).get(get_events))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExamList {
    pub exams: Vec<ExamSummary>,
}

async fn list_exams(State(state): Shared) -> Json<ExamList> {
    Json(ExamList { exams: state.summaries() })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoadRequest {
    pub manifest: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConfigResponse {
    pub exam_id: String,
    pub revision: u64,
    pub config: DetectionConfig,
}

fn config_response(snap: &Snapshot) -> Json<ConfigResponse> {
    Json(ConfigResponse { exam_id: snap.exam_id.clone(), revision: snap.revision, config: snap.config })
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8], invalid: fn(String) -> ApiError) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| invalid(format!("malformed body: {e}")))
}

async fn load_exam(
    State(state): Shared,
    Path(exam_id): Path<String>,
    body: Bytes,
) -> Result<Json<ExamSummary>, ApiError> {
    let req: LoadRequest = parse_body(&body, ApiError::InvalidRequest)?;
    let snap = state.load(&exam_id, req.manifest.clone()).await?;
    Ok(Json(ExamSummary {
        exam_id,
        revision: snap.revision,
        students: snap.exam.sessions.len(),
        questions: snap.exam.questions.len(),
        manifest: req.manifest,
    }))
}

async fn get_config(State(state): Shared, Path(exam_id): Path<String>) -> Result<Json<ConfigResponse>, ApiError> {
    let snap = state.snapshot(&exam_id)?;
    Ok(config_response(&snap))
}

async fn update_config(
    State(state): Shared,
    Path(exam_id): Path<String>,
    body: Bytes,
) -> Result<Json<ConfigResponse>, ApiError> {
    state.slot(&exam_id)?;
    let patch: ConfigPatch = parse_body(&body, ApiError::InvalidConfig)?;
    let snap = state.update_config(&exam_id, patch).await?;
    Ok(config_response(&snap))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StudentListResponse {
    pub exam_id: String,
    pub revision: u64,
    pub config: DetectionConfig,
    pub sort: StudentOrder,
    pub students: Vec<StudentRiskOverview>,
    pub cohort: Option<proctor_core::analytics::CohortSummary>,
}

fn parse_sort(query: &HashMap<String, String>) -> Result<StudentOrder, ApiError> {
    match query.get("sort").map(String::as_str) {
        None | Some("risk") => Ok(StudentOrder::Risk),
        Some("student_id") => Ok(StudentOrder::StudentId),
        Some(other) => Err(ApiError::InvalidRequest(format!("sort must be risk or student_id, got {other:?}"))),
    }
}

async fn student_list(
    State(state): Shared,
    Path(exam_id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Json<StudentListResponse>, ApiError> {
    let sort = parse_sort(&query)?;
    let snap = state.snapshot(&exam_id)?;
    let mut students = snap.analysis.overviews.clone();
    sort.apply(&mut students);
    Ok(Json(StudentListResponse {
        exam_id,
        revision: snap.revision,
        config: snap.config,
        sort,
        students,
        cohort: snap.analysis.cohort.clone(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QuestionBlock {
    pub profile: QuestionRiskProfile,
    pub cohort: Option<QuestionCohortStats>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QuestionListResponse {
    pub exam_id: String,
    pub revision: u64,
    pub student_id: String,
    pub questions: Vec<QuestionBlock>,
}

fn require_student(snap: &Snapshot, student_id: &str) -> Result<usize, ApiError> {
    snap.exam
        .sessions
        .iter()
        .position(|s| s.student_id == student_id)
        .ok_or_else(|| ApiError::NotFound(format!("student {student_id:?} is not in exam {:?}", snap.exam_id)))
}

async fn question_list(
    State(state): Shared,
    Path((exam_id, student_id)): Path<(String, String)>,
) -> Result<Json<QuestionListResponse>, ApiError> {
    let snap = state.snapshot(&exam_id)?;
    require_student(&snap, &student_id)?;
    let questions = snap
        .analysis
        .student_profiles(&student_id)
        .map(|p| QuestionBlock { profile: p.clone(), cohort: snap.analysis.question_cohort(&p.question_id).cloned() })
        .collect();
    Ok(Json(QuestionListResponse { exam_id, revision: snap.revision, student_id, questions }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BehaviorResponse {
    pub exam_id: String,
    pub revision: u64,
    pub timeline: BehaviorTimeline,
    pub peer_context: PeerContext,
    pub video: Option<String>,
    pub segment_start_ms: i64,
    pub segment_end_ms: i64,
}

fn parse_number<T: std::str::FromStr>(query: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    query
        .get(key)
        .map(|v| v.parse().map_err(|_| ApiError::InvalidRequest(format!("{key} must be a number, got {v:?}"))))
        .transpose()
}

fn require_question(snap: &Snapshot, idx: usize, question_id: &str) -> Result<(), ApiError> {
    if snap.exam.question_index(question_id).is_none() || snap.exam.sessions[idx].segment(question_id).is_none() {
        return Err(ApiError::NotFound(format!(
            "question {question_id:?} has no segment for student {:?}",
            snap.exam.sessions[idx].student_id
        )));
    }
    Ok(())
}

async fn behavior(
    State(state): Shared,
    Path((exam_id, student_id, question_id)): Path<(String, String, String)>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Json<BehaviorResponse>, ApiError> {
    let max_points = parse_number(&query, "max_points")?.unwrap_or(DEFAULT_MAX_POINTS);
    let snap = state.snapshot(&exam_id)?;
    let idx = require_student(&snap, &student_id)?;
    require_question(&snap, idx, &question_id)?;
    let session = &snap.exam.sessions[idx];
    let timeline =
        behavior_timeline(session, &snap.analysis.series[idx], &snap.analysis.detections[idx], &question_id, max_points)
            .map_err(|e| ApiError::InvalidRequest(e.to_string()))?;
    let peers = peer_context(&snap.exam, &snap.analysis.series, &student_id, &question_id, DEFAULT_HISTOGRAM_BINS)
        .map_err(|e| ApiError::NotFound(e.to_string()))?;
    Ok(Json(BehaviorResponse {
        exam_id,
        revision: snap.revision,
        segment_start_ms: timeline.segment.start_ms,
        segment_end_ms: timeline.segment.end_ms,
        timeline,
        peer_context: peers,
        video: session.video.clone(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlaybackResponse {
    pub exam_id: String,
    pub revision: u64,
    pub student_id: String,
    pub question_id: String,
    /// Offset into the question segment.
    pub t_ms: i64,
    /// Position in the session recording to seek the video to.
    pub video_offset_ms: i64,
    pub video: Option<String>,
    pub grid: DwellGrid,
}

async fn playback(
    State(state): Shared,
    Path((exam_id, student_id, question_id)): Path<(String, String, String)>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Json<PlaybackResponse>, ApiError> {
    let t_ms: i64 = parse_number(&query, "t_ms")?.ok_or_else(|| ApiError::InvalidRequest("t_ms is required".into()))?;
    let snap = state.snapshot(&exam_id)?;
    let idx = require_student(&snap, &student_id)?;
    require_question(&snap, idx, &question_id)?;
    let session = &snap.exam.sessions[idx];
    let seg = session.segment(&question_id).expect("checked above");
    if !(0..=seg.duration_ms()).contains(&t_ms) {
        return Err(ApiError::InvalidRequest(format!("t_ms {t_ms} outside [0, {}]", seg.duration_ms())));
    }
    let lo = session.mouse_events.partition_point(|e| e.timestamp_ms < seg.start_ms);
    let hi = session.mouse_events.partition_point(|e| e.timestamp_ms < seg.end_ms);
    let events: &[MouseEvent] = &session.mouse_events[lo..hi];
    let offset = seg.start_ms + t_ms;
    let grid = dwell_grid(events, session.resolution, GridDims::default(), Some(offset))
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(PlaybackResponse {
        exam_id,
        revision: snap.revision,
        student_id,
        question_id,
        t_ms,
        video_offset_ms: offset,
        video: session.video.clone(),
        grid,
    }))
}

async fn video(
    State(state): Shared,
    Path((exam_id, student_id)): Path<(String, String)>,
) -> Result<impl IntoResponse, ApiError> {
    let slot = state.slot(&exam_id)?;
    let snap = slot.snapshot();
    let idx = require_student(&snap, &student_id)?;
    let rel = snap.exam.sessions[idx]
        .video
        .clone()
        .ok_or_else(|| ApiError::NotFound(format!("student {student_id:?} has no video")))?;
    let base = slot.manifest_path().parent().map(PathBuf::from).unwrap_or_default();
    let bytes = tokio::fs::read(base.join(&rel))
        .await
        .map_err(|e| ApiError::NotFound(format!("video {rel:?}: {e}")))?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes))
}

async fn post_events(
    State(state): Shared,
    Path(token): Path<String>,
    body: Bytes,
) -> Result<Json<CaptureAck>, ApiError> {
    let batch: CaptureBatch = parse_body(&body, ApiError::InvalidRequest)?;
    Ok(Json(state.captures.append(&token, batch)?))
}

async fn get_events(State(state): Shared, Path(token): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let body = state
        .captures
        .jsonl(&token)
        .ok_or_else(|| ApiError::NotFound(format!("no events for session {token:?}")))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}
