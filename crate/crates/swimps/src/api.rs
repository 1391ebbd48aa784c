//! HTTP API and live event stream.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/devices` | all device records with an `online` flag |
//! | GET | `/devices/{id}/latest` | last accepted telemetry |
//! | GET | `/devices/{id}/timeline?since=&kinds=` | log entries after `since`, filtered by a comma list of kinds |
//! | GET, PUT | `/devices/{id}/config` | gateway mirror of the device config; PUT sends the commands that reach it |
//! | POST | `/devices/{id}/command` | one command, answered with the device's ack status |
//! | GET | `/events` | server-sent events, one `TimelineEntry` per event |
//!
//! Each event's `event:` field is the entry kind, `id:` its log seq and
//! `data:` the entry exactly as it appears in the log.

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use swimps_core::device::DeviceConfig;
use swimps_core::gateway::{CommandStatus, DeviceRecord, DispatchError, EntryKind, LinkError};
use swimps_core::protocol::{CommandPayload, OverrideMode};
use tokio::sync::broadcast::error::RecvError;

use crate::hub::{CommandOutcome, Hub};

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/devices", get(list_devices))
        .route("/devices/{id}/latest", get(latest))
        .route("/devices/{id}/timeline", get(timeline))
        .route("/devices/{id}/config", get(get_config).put(put_config))
        .route("/devices/{id}/command", post(command))
        .route("/events", get(events))
        .with_state(hub)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn unknown(id: u32) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown device {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.message });
        (self.status, Json(body)).into_response()
    }
}

impl From<DispatchError> for ApiError {
    fn from(e: DispatchError) -> Self {
        let status = match &e {
            DispatchError::InvalidPayload(_) => StatusCode::UNPROCESSABLE_ENTITY,
            DispatchError::UnknownDevice(_) => StatusCode::NOT_FOUND,
            DispatchError::Offline(_) => StatusCode::SERVICE_UNAVAILABLE,
            DispatchError::Link(LinkError::Timeout) => StatusCode::GATEWAY_TIMEOUT,
            DispatchError::Link(_) | DispatchError::BadReply(_) => StatusCode::BAD_GATEWAY,
            DispatchError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Serialize)]
struct DeviceView {
    #[serde(flatten)]
    record: DeviceRecord,
    online: bool,
}

async fn list_devices(State(hub): State<Arc<Hub>>) -> Json<Vec<DeviceView>> {
    let now = hub.now_ms();
    let gw = hub.gateway();
    Json(
        gw.devices()
            .map(|r| DeviceView {
                online: r.online(now),
                record: r.clone(),
            })
            .collect(),
    )
}

async fn latest(State(hub): State<Arc<Hub>>, Path(id): Path<u32>) -> Response {
    let gw = hub.gateway();
    match gw.device(id) {
        None => ApiError::unknown(id).into_response(),
        Some(r) => match r.last_telemetry {
            Some(t) => Json(t).into_response(),
            None => ApiError::new(StatusCode::NOT_FOUND, "no telemetry yet").into_response(),
        },
    }
}

#[derive(Deserialize)]
struct TimelineQuery {
    #[serde(default)]
    since: u64,
    kinds: Option<String>,
}

async fn timeline(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<u32>,
    Query(q): Query<TimelineQuery>,
) -> Response {
    let kinds = match q.kinds.as_deref().filter(|k| !k.is_empty()) {
        None => None,
        Some(csv) => {
            let parsed: Option<Vec<EntryKind>> = csv.split(',').map(EntryKind::parse).collect();
            match parsed {
                Some(k) => Some(k),
                None => {
                    return ApiError::new(StatusCode::BAD_REQUEST, format!("bad kinds: {csv}"))
                        .into_response()
                }
            }
        }
    };
    Json(hub.gateway().timeline(id, q.since, kinds.as_deref())).into_response()
}

async fn get_config(State(hub): State<Arc<Hub>>, Path(id): Path<u32>) -> ApiResult<DeviceConfig> {
    let gw = hub.gateway();
    gw.device(id)
        .map(|r| Json(r.config))
        .ok_or_else(|| ApiError::unknown(id))
}

/// Accepts a full or partial config. Only thresholds and the override mode
/// can be changed over the air.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigUpdate {
    device_id: Option<u32>,
    low_threshold: Option<u16>,
    high_threshold: Option<u16>,
    sample_interval_s: Option<u32>,
    #[serde(rename = "override")]
    mode: Option<OverrideMode>,
}

async fn put_config(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<u32>,
    Json(u): Json<ConfigUpdate>,
) -> Result<Response, ApiError> {
    let current = hub
        .gateway()
        .device(id)
        .map(|r| r.config)
        .ok_or_else(|| ApiError::unknown(id))?;
    let unprocessable = |m: &str| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m);
    if u.device_id.is_some_and(|d| d != id) {
        return Err(unprocessable("device_id does not match the path"));
    }
    if u.sample_interval_s
        .is_some_and(|s| s != current.sample_interval_s)
    {
        return Err(unprocessable(
            "sample_interval_s cannot be changed remotely",
        ));
    }

    let mut cmds = Vec::new();
    let low = u.low_threshold.unwrap_or(current.low_threshold);
    let high = u.high_threshold.unwrap_or(current.high_threshold);
    if (low, high) != (current.low_threshold, current.high_threshold) {
        let cmd = CommandPayload::SetThresholds {
            low_cpct: low,
            high_cpct: high,
        };
        cmd.validate().map_err(unprocessable)?;
        cmds.push(cmd);
    }
    if let Some(mode) = u.mode.filter(|m| *m != current.mode) {
        cmds.push(CommandPayload::PumpOverride { mode });
    }

    let mut status = StatusCode::OK;
    for cmd in cmds {
        match hub.dispatch(id, cmd).await?.status {
            CommandStatus::Ok => {}
            CommandStatus::Queued => status = StatusCode::ACCEPTED,
            CommandStatus::Rejected => {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "device rejected the change",
                ))
            }
        }
    }
    let cfg = hub.gateway().device(id).map(|r| r.config);
    Ok((status, Json(cfg)).into_response())
}

async fn command(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<u32>,
    Json(cmd): Json<CommandPayload>,
) -> ApiResult<CommandOutcome> {
    Ok(Json(hub.dispatch(id, cmd).await?))
}

async fn events(State(hub): State<Arc<Hub>>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = hub.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(entry) => {
                    let ev = Event::default()
                        .event(entry.kind().as_str())
                        .id(entry.seq.to_string())
                        .data(serde_json::to_string(&entry).expect("entries serialize"));
                    return Some((Ok(ev), rx));
                }
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
