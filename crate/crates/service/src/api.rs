use std::collections::HashMap;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use hvcviz_core::order::{
    failure_report, isolate, process_summary, FailureReport, OrderError, OrderMode, ProcessSummary, SwimlaneModel,
    TimeMode,
};
use serde::Serialize;
use serde_json::json;

use crate::state::SharedSnapshot;

#[derive(Debug, Clone)]
pub struct ApiState {
    pub snapshot: SharedSnapshot,
    pub mode: OrderMode,
    pub time_mode: TimeMode,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": message }))).into_response()
    }
}

impl From<OrderError> for ApiError {
    fn from(e: OrderError) -> Self {
        match e {
            OrderError::NotFound(_) => ApiError::NotFound(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

type Params = Query<HashMap<String, String>>;

fn param<T>(params: &HashMap<String, String>, key: &str, default: T) -> Result<T, ApiError>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    match params.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|e| ApiError::BadRequest(format!("invalid `{key}`={v:?}: {e}"))),
    }
}

#[derive(Debug, Serialize)]
pub struct SwimlaneResponse {
    pub cursor: u64,
    /// False when `model` holds only what changed after `since`.
    pub full: bool,
    pub model: SwimlaneModel,
}

async fn swimlane(State(state): State<ApiState>, Query(params): Params) -> Result<Json<SwimlaneResponse>, ApiError> {
    let mode = param(&params, "mode", state.mode)?;
    let time = param(&params, "time", state.time_mode)?;
    let since: Option<u64> = params
        .get("since")
        .map(|v| v.parse().map_err(|e| ApiError::BadRequest(format!("invalid `since`={v:?}: {e}"))))
        .transpose()?;
    let snap = state.snapshot.current();
    let cursor = snap.cursor();
    let full_model = snap.model(mode, time);
    let response = match since {
        // A client ahead of the log (say, after a restart) gets everything.
        Some(since) if since <= cursor => {
            let previous = snap.model_at(since, mode, time)?;
            SwimlaneResponse { cursor, full: false, model: full_model.delta_from(&previous) }
        }
        _ => SwimlaneResponse { cursor, full: true, model: full_model },
    };
    Ok(Json(response))
}

async fn isolate_record(
    State(state): State<ApiState>,
    Path(seq): Path<String>,
    Query(params): Params,
) -> Result<Json<SwimlaneModel>, ApiError> {
    let seq: u64 = seq.parse().map_err(|_| ApiError::BadRequest(format!("invalid record seq {seq:?}")))?;
    let depth: usize = param(&params, "depth", 1)?;
    let mode = param(&params, "mode", state.mode)?;
    let time = param(&params, "time", state.time_mode)?;
    let snap = state.snapshot.current();
    Ok(Json(isolate(snap.ordered(mode), seq, Some(depth), time)?))
}

async fn failures(State(state): State<ApiState>, Query(params): Params) -> Result<Json<FailureReport>, ApiError> {
    let mode = param(&params, "mode", state.mode)?;
    Ok(Json(failure_report(state.snapshot.current().ordered(mode))))
}

#[derive(Debug, Serialize)]
pub struct ProcessesResponse {
    pub cursor: u64,
    pub skipped_lines: usize,
    pub processes: Vec<ProcessSummary>,
}

async fn processes(State(state): State<ApiState>, Query(params): Params) -> Result<Json<ProcessesResponse>, ApiError> {
    let mode = param(&params, "mode", state.mode)?;
    let snap = state.snapshot.current();
    Ok(Json(ProcessesResponse {
        cursor: snap.cursor(),
        skipped_lines: snap.skipped_lines(),
        processes: process_summary(snap.ordered(mode)),
    }))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

pub fn api_router(state: ApiState) -> Router {
    Router::new()
        .route("/api/swimlane", get(swimlane))
        .route("/api/records/{seq}/isolate", get(isolate_record))
        .route("/api/failures", get(failures))
        .route("/api/processes", get(processes))
        .route("/healthz", get(healthz))
        .with_state(state)
}
