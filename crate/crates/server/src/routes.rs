use std::sync::Arc;

use axum::extract::{State, WebSocketUpgrade};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;

use microsteer_core::api::{
    CurrentsRequest, DiffusionRequest, DiffusionResponse, ErrorBody, EventAck, FieldRequest, ParseRequest,
    RecordRequest, ReplayResponse, ResampleRequest, RetargetRequest, RunRequest, RunResponse, SessionStatus,
};
use microsteer_core::coils::{currents_for_field, field_for_currents, CoilCurrents};
use microsteer_core::control::{retarget_field, ControllerConfig};
use microsteer_core::geometry::Vec2;
use microsteer_core::session::{metrics, replay, resample_path, run_headless, Event, MetricsReport, RunRecord, Scenario};
use microsteer_core::sim::{default_diffusion, FieldCommand};

use crate::live::LiveHandle;
use crate::ws::operator_connection;
use crate::AppState;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(e: impl ToString) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

pub async fn healthz() -> &'static str {
    "ok"
}

pub async fn parse_scenario(Json(req): Json<ParseRequest>) -> ApiResult<Scenario> {
    let mut scenario = Scenario::parse(&req.text).map_err(ApiError::bad_request)?;
    for (key, value) in &req.overrides {
        scenario.set(key, value).map_err(ApiError::bad_request)?;
    }
    scenario.events.sort_by(|a, b| a.time.total_cmp(&b.time));
    scenario.validate().map_err(ApiError::bad_request)?;
    Ok(Json(scenario))
}

pub async fn run(Json(req): Json<RunRequest>) -> ApiResult<RunResponse> {
    let response = blocking(move || {
        let (record, metrics) = run_headless(&req.scenario).map_err(ApiError::bad_request)?;
        Ok(RunResponse { metrics, frames: record.snapshots.len(), record: record.to_jsonl() })
    })
    .await?;
    Ok(Json(response))
}

fn parse_record(text: &str) -> Result<RunRecord, ApiError> {
    RunRecord::from_jsonl(text).map_err(ApiError::bad_request)
}

pub async fn replay_record(Json(req): Json<RecordRequest>) -> ApiResult<ReplayResponse> {
    let response = blocking(move || {
        let record = parse_record(&req.record)?;
        let report = replay(&record).map_err(ApiError::bad_request)?;
        Ok(ReplayResponse {
            frames: report.frames,
            identical: report.identical(),
            first_mismatch: report.first_mismatch,
            metrics: report.metrics,
        })
    })
    .await?;
    Ok(Json(response))
}

pub async fn record_metrics(Json(req): Json<RecordRequest>) -> ApiResult<MetricsReport> {
    Ok(Json(metrics(&parse_record(&req.record)?)))
}

pub async fn record_csv(Json(req): Json<RecordRequest>) -> Result<Response, ApiError> {
    let record = parse_record(&req.record)?;
    let mut buf = Vec::new();
    record.write_csv(&mut buf).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], buf).into_response())
}

pub async fn resample(Json(req): Json<ResampleRequest>) -> ApiResult<Vec<Vec2>> {
    Ok(Json(resample_path(&req.points, req.node_spacing).map_err(ApiError::bad_request)?))
}

pub async fn retarget(Json(req): Json<RetargetRequest>) -> ApiResult<FieldCommand> {
    let config = ControllerConfig { min_speed: req.min_speed.unwrap_or(0.0), ..ControllerConfig::default() };
    Ok(Json(retarget_field(&req.applied, req.velocity, req.target, &config).map_err(ApiError::bad_request)?))
}

pub async fn coil_currents(Json(req): Json<CurrentsRequest>) -> ApiResult<CoilCurrents> {
    Ok(Json(currents_for_field(&req.field, &req.calibration).map_err(ApiError::bad_request)?))
}

pub async fn coil_field(Json(req): Json<FieldRequest>) -> ApiResult<Vec2> {
    req.calibration.validate().map_err(ApiError::bad_request)?;
    Ok(Json(field_for_currents(&req.currents, &req.calibration)))
}

pub async fn diffusion(Json(req): Json<DiffusionRequest>) -> ApiResult<DiffusionResponse> {
    let (rotational, translational) =
        default_diffusion(req.radius, req.temperature, req.viscosity).map_err(ApiError::bad_request)?;
    Ok(Json(DiffusionResponse { rotational, translational }))
}

fn live(state: &AppState) -> Result<&Arc<LiveHandle>, ApiError> {
    state.live.as_ref().ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "this server runs no live session"))
}

pub async fn session_status(State(state): State<AppState>) -> ApiResult<SessionStatus> {
    let live = live(&state)?;
    let latest = live.latest();
    Ok(Json(SessionStatus {
        info: live.info().clone(),
        frames: live.frames(),
        time: latest.as_ref().map_or(0.0, |s| s.time),
        operator_connected: live.operator_connected(),
        latest,
    }))
}

pub async fn session_event(State(state): State<AppState>, Json(event): Json<Event>) -> ApiResult<EventAck> {
    let ack = live(&state)?.submit(event).await.map_err(ApiError::bad_request)?;
    Ok(Json(ack))
}

pub async fn session_snapshot(State(state): State<AppState>) -> Result<Response, ApiError> {
    match live(&state)?.latest() {
        Some(s) => Ok(Json(s).into_response()),
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

pub async fn session_record(State(state): State<AppState>) -> Result<Response, ApiError> {
    let live = live(&state)?.clone();
    let text = blocking(move || Ok(live.record().to_jsonl())).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

pub async fn session_frame(State(state): State<AppState>) -> Result<Response, ApiError> {
    let frame = live(&state)?
        .render()
        .await
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "live session has stopped"))?;
    Ok(([(header::CONTENT_TYPE, "image/x-portable-graymap")], frame.to_pgm()).into_response())
}

pub async fn session_ws(State(state): State<AppState>, ws: WebSocketUpgrade) -> Result<Response, ApiError> {
    let live = live(&state)?.clone();
    let guard = live
        .try_claim_operator()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "an operator is already connected"))?;
    Ok(ws.on_upgrade(move |socket| operator_connection(socket, live, guard)))
}
