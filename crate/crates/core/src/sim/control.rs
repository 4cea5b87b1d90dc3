//! HTTP control plane of the simulator, one endpoint per control command.

use std::collections::{BTreeSet, HashMap};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::server::{ControlError, Sim};
use super::state::{DialOutcome, ToneConfig};

impl IntoResponse for ControlError {
    fn into_response(self) -> Response {
        let status = match self {
            ControlError::StoreFull { .. } | ControlError::Busy => StatusCode::CONFLICT,
            ControlError::Invalid { .. } => StatusCode::BAD_REQUEST,
        };
        (status, Json(self)).into_response()
    }
}

#[derive(Deserialize)]
struct InjectSms {
    from: String,
    text: Option<String>,
    pdu: Option<String>,
}

#[derive(Deserialize)]
struct InjectCall {
    from: String,
}

#[derive(Deserialize)]
struct Signal {
    n: u8,
    ber: Option<u8>,
}

#[derive(Deserialize)]
struct Registration {
    stat: u8,
}

#[derive(Deserialize)]
struct Capabilities {
    commands: Option<BTreeSet<String>>,
    #[serde(default)]
    remove: Vec<String>,
    #[serde(default)]
    add: Vec<String>,
}

#[derive(Deserialize)]
struct Apdu {
    table: HashMap<String, String>,
}

#[derive(Deserialize)]
struct Dial {
    outcome: DialOutcome,
}

pub fn router(sim: Sim) -> Router {
    Router::new()
        .route("/ctl/inject_sms", post(inject_sms))
        .route("/ctl/inject_call", post(inject_call))
        .route("/ctl/remote_hangup", post(remote_hangup))
        .route("/ctl/signal", post(signal))
        .route("/ctl/registration", post(registration))
        .route(
            "/ctl/capabilities",
            get(capabilities).post(set_capabilities),
        )
        .route("/ctl/script_apdu", post(script_apdu))
        .route("/ctl/tone", post(tone))
        .route("/ctl/dial_outcome", post(dial_outcome))
        .route("/ctl/state", get(state))
        .route("/ctl/submits", get(submits))
        .with_state(sim)
}

async fn inject_sms(
    State(sim): State<Sim>,
    Json(req): Json<InjectSms>,
) -> Result<Json<serde_json::Value>, ControlError> {
    let r = match (req.text, req.pdu) {
        (Some(t), None) => sim.inject_sms(&req.from, &t)?,
        (None, Some(p)) => sim.inject_pdus(vec![p])?,
        _ => {
            return Err(ControlError::Invalid {
                message: "exactly one of text or pdu".into(),
            })
        }
    };
    Ok(Json(serde_json::to_value(r).unwrap_or_default()))
}

async fn inject_call(
    State(sim): State<Sim>,
    Json(req): Json<InjectCall>,
) -> Result<StatusCode, ControlError> {
    sim.inject_call(&req.from)?;
    Ok(StatusCode::OK)
}

async fn remote_hangup(State(sim): State<Sim>) -> Json<serde_json::Value> {
    Json(json!({ "hung_up": sim.remote_hangup() }))
}

async fn signal(
    State(sim): State<Sim>,
    Json(req): Json<Signal>,
) -> Result<StatusCode, ControlError> {
    if req.n > 31 && req.n != 99 {
        return Err(ControlError::Invalid {
            message: "n must be 0-31 or 99".into(),
        });
    }
    sim.set_signal(req.n, req.ber);
    Ok(StatusCode::OK)
}

async fn registration(
    State(sim): State<Sim>,
    Json(req): Json<Registration>,
) -> Result<StatusCode, ControlError> {
    if req.stat > 5 {
        return Err(ControlError::Invalid {
            message: "stat must be 0-5".into(),
        });
    }
    sim.set_registration(req.stat);
    Ok(StatusCode::OK)
}

async fn capabilities(State(sim): State<Sim>) -> Json<BTreeSet<String>> {
    Json(sim.state().capabilities.clone())
}

async fn set_capabilities(
    State(sim): State<Sim>,
    Json(req): Json<Capabilities>,
) -> Json<BTreeSet<String>> {
    if let Some(c) = req.commands {
        sim.set_capabilities(c);
    }
    for c in &req.remove {
        sim.remove_capability(c);
    }
    for c in &req.add {
        sim.add_capability(c);
    }
    Json(sim.state().capabilities.clone())
}

async fn script_apdu(State(sim): State<Sim>, Json(req): Json<Apdu>) -> StatusCode {
    sim.script_apdu(req.table);
    StatusCode::OK
}

async fn tone(State(sim): State<Sim>, Json(req): Json<ToneConfig>) -> StatusCode {
    sim.set_tone(req);
    StatusCode::OK
}

async fn dial_outcome(State(sim): State<Sim>, Json(req): Json<Dial>) -> StatusCode {
    sim.set_dial_outcome(req.outcome);
    StatusCode::OK
}

async fn state(State(sim): State<Sim>) -> Json<serde_json::Value> {
    Json(sim.state_json())
}

async fn submits(State(sim): State<Sim>) -> Json<serde_json::Value> {
    Json(serde_json::to_value(sim.submits()).unwrap_or_default())
}
