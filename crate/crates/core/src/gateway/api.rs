use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::ws::WebSocketUpgrade;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Json, Router};
use base64::Engine as _;
use chrono::Utc;
use futures::Stream;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;
use tracing::{info, warn};

use super::error::ApiError;
use super::events::{EventKind, GatewayEvent};
use super::surveillance::SurveillanceConfig;
use super::{audio, to_json, Caller, Gateway, PersonalizedService};
use crate::call::{CallSession, RtpEndpoint};
use crate::mms::{MmsPart, SendRequest};
use crate::services::snapshot::{self, Contact};
use crate::services::{DataSnapshot, MessageFilter, Service, ServiceError, StoredSms, SyncEdit};
use crate::sms::SmsPdu;

type Gw = State<Arc<Gateway>>;
type ApiResult<T> = Result<T, ApiError>;

/// JSON body extractor whose rejections are 400 with the usual error body.
pub struct ApiJson<T>(pub T);

#[axum::async_trait]
impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(e) => Err(ApiError::bad_request(rejection_text(e))),
        }
    }
}

fn rejection_text(e: JsonRejection) -> String {
    e.body_text()
}

/// Parses an optional JSON body; an empty body yields `T::default()`.
fn optional_body<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

pub fn router(gw: Arc<Gateway>) -> Router {
    let v1 = Router::new()
        .route("/v1/sms", get(list_sms).post(send_sms))
        .route("/v1/sms/sent", get(sent_sms))
        .route("/v1/sms/:storage/:index", get(get_sms).delete(delete_sms))
        .route("/v1/mms", get(list_mms).post(send_mms))
        .route("/v1/mms/notification", post(mms_notification))
        .route("/v1/mms/:id", get(get_mms))
        .route("/v1/calls", get(current_call).post(dial))
        .route("/v1/calls/:id", get(get_call))
        .route("/v1/calls/:id/answer", post(answer))
        .route("/v1/calls/:id/hangup", post(hangup))
        .route("/v1/calls/:id/audio", get(call_audio))
        .route("/v1/events", get(events))
        .route("/v1/modem/status", get(modem_status))
        .route("/v1/sim/apdu", post(sim_apdu))
        .route("/v1/services", get(list_services).post(register_service))
        .route(
            "/v1/services/surveillance",
            get(get_surveillance).put(put_surveillance),
        )
        .route("/v1/services/surveillance/motion", post(motion))
        .route(
            "/v1/phonebook",
            get(list_phonebook).post(add_contact).put(put_phonebook),
        )
        .route(
            "/v1/phonebook/:index",
            get(get_contact).put(put_contact).delete(delete_contact),
        )
        .route("/v1/snapshot", get(take_snapshot))
        .route("/v1/sync", post(sync))
        .route("/v1/share/:owner", get(list_share))
        .route("/v1/share/:owner/*path", get(read_share).put(write_share))
        .route_layer(middleware::from_fn_with_state(gw.clone(), auth));
    Router::new()
        .route("/healthz", get(healthz))
        .merge(v1)
        .with_state(gw)
}

async fn auth(State(gw): Gw, mut req: Request, next: Next) -> Response {
    let token = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    match token.and_then(|t| gw.caller(t)) {
        Some(caller) => {
            req.extensions_mut().insert(caller);
            next.run(req).await
        }
        None => ApiError::unauthorized().into_response(),
    }
}

async fn healthz(State(gw): Gw) -> Json<Value> {
    Json(json!({ "status": "ok", "ready": gw.is_ready() }))
}

// ---- SMS

#[derive(Deserialize)]
struct SendSms {
    to: String,
    text: String,
}

fn new_id(prefix: &str) -> String {
    format!("{prefix}-{:012x}", rand::thread_rng().gen::<u64>() >> 16)
}

/// Sends an SMS, refreshing a catalog that said SMS was missing in case the
/// modem has regained it.
async fn dispatch_sms(
    gw: &Gateway,
    to: &str,
    text: &str,
) -> ApiResult<crate::services::SendReport> {
    gw.ensure_ready()?;
    let svc = gw.services();
    match svc.send_sms(to, text).await {
        Err(ServiceError::Unavailable(Service::Sms)) => {
            svc.refresh_catalog().await?;
            Ok(svc.send_sms(to, text).await?)
        }
        other => Ok(other?),
    }
}

async fn send_sms(State(gw): Gw, ApiJson(req): ApiJson<SendSms>) -> ApiResult<impl IntoResponse> {
    if req.to.trim().is_empty() {
        return Err(ApiError::bad_request("\"to\" is empty"));
    }
    let report = dispatch_sms(&gw, req.to.trim(), &req.text).await?;
    let id = new_id("sms");
    let body = json!({
        "id": id,
        "segments": report.segments.len(),
        "concat_ref": report.concat_ref,
        "results": report.segments,
    });
    gw.sent.lock().unwrap().push(json!({
        "id": id,
        "to": req.to,
        "text": req.text,
        "at": Utc::now(),
        "report": report,
    }));
    Ok((StatusCode::ACCEPTED, Json(body)))
}

async fn sent_sms(State(gw): Gw) -> Json<Value> {
    Json(Value::Array(gw.sent.lock().unwrap().clone()))
}

#[derive(Deserialize)]
struct SmsQuery {
    #[serde(rename = "box")]
    mailbox: Option<String>,
    storage: Option<String>,
}

/// Flattened view of a stored message.
fn message_view(m: &StoredSms) -> Value {
    let mut v = json!({
        "storage": m.storage,
        "index": m.index,
        "status": m.status,
        "text": m.text(),
    });
    match &m.pdu {
        SmsPdu::Deliver(d) => {
            v["from"] = json!(d.originator.to_string());
            v["timestamp"] = to_json(&d.timestamp);
            if let Some(h) = d.udh {
                v["concat"] = to_json(&h);
            }
        }
        SmsPdu::Submit(s) => {
            v["to"] = json!(s.destination.to_string());
            if let Some(h) = s.udh {
                v["concat"] = to_json(&h);
            }
        }
    }
    v["pdu"] = to_json(&m.pdu);
    v
}

async fn list_sms(State(gw): Gw, Query(q): Query<SmsQuery>) -> ApiResult<Json<Value>> {
    gw.ensure_ready()?;
    let filter: MessageFilter = q.mailbox.as_deref().unwrap_or("all").parse()?;
    let storage = q.storage.as_deref().unwrap_or("SM");
    let msgs = gw.services().list_messages(storage, filter).await?;
    Ok(Json(Value::Array(msgs.iter().map(message_view).collect())))
}

async fn get_sms(
    State(gw): Gw,
    Path((storage, index)): Path<(String, u32)>,
) -> ApiResult<Json<Value>> {
    gw.ensure_ready()?;
    let m = gw.services().fetch_message(&storage, index).await?;
    Ok(Json(message_view(&m)))
}

async fn delete_sms(
    State(gw): Gw,
    Path((storage, index)): Path<(String, u32)>,
) -> ApiResult<StatusCode> {
    gw.ensure_ready()?;
    gw.services().delete_message(&storage, index).await?;
    Ok(StatusCode::NO_CONTENT)
}

// ---- MMS

#[derive(Deserialize)]
struct ApiPart {
    content_type: Option<String>,
    text: Option<String>,
    /// Base64.
    data: Option<String>,
    content_id: Option<String>,
    content_location: Option<String>,
}

#[derive(Deserialize)]
struct SendMms {
    to: Vec<String>,
    #[serde(default)]
    cc: Vec<String>,
    subject: Option<String>,
    parts: Vec<ApiPart>,
    #[serde(default)]
    delivery_report: bool,
}

fn mms_part(p: ApiPart, i: usize) -> ApiResult<MmsPart> {
    let (data, default_type) = match (p.text, p.data) {
        (Some(t), None) => (t.into_bytes(), "text/plain; charset=utf-8"),
        (None, Some(d)) => (
            base64::engine::general_purpose::STANDARD
                .decode(d.as_bytes())
                .map_err(|e| ApiError::bad_request(format!("part {i}: bad base64: {e}")))?,
            "application/octet-stream",
        ),
        _ => {
            return Err(ApiError::bad_request(format!(
                "part {i}: exactly one of text or data"
            )))
        }
    };
    Ok(MmsPart {
        content_type: p.content_type.unwrap_or_else(|| default_type.to_owned()),
        content_id: p.content_id,
        content_location: p.content_location,
        data,
    })
}

fn mms_manager(gw: &Gateway) -> ApiResult<&Arc<crate::mms::MmsManager>> {
    gw.mms()
        .ok_or_else(|| ServiceError::Unavailable(Service::Mms).into())
}

async fn send_mms(State(gw): Gw, ApiJson(req): ApiJson<SendMms>) -> ApiResult<Response> {
    let mms = mms_manager(&gw)?;
    let parts = req
        .parts
        .into_iter()
        .enumerate()
        .map(|(i, p)| mms_part(p, i))
        .collect::<ApiResult<Vec<_>>>()?;
    let tx = mms
        .send(SendRequest {
            to: req.to,
            cc: req.cc,
            subject: req.subject,
            parts,
            delivery_report: req.delivery_report,
        })
        .await?;
    let status = if tx.state == crate::mms::TxState::Failed {
        StatusCode::BAD_GATEWAY
    } else {
        StatusCode::ACCEPTED
    };
    Ok((status, Json(to_json(&tx))).into_response())
}

async fn list_mms(State(gw): Gw) -> ApiResult<Json<Value>> {
    Ok(Json(to_json(&mms_manager(&gw)?.list())))
}

async fn get_mms(State(gw): Gw, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let tx = mms_manager(&gw)?
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown transaction {id}")))?;
    Ok(Json(to_json(&tx)))
}

const MMS_NOTIFICATION_IND: u8 = 0x82;
const MMS_DELIVERY_IND: u8 = 0x86;

/// Push endpoint for m-notification-ind and m-delivery-ind PDUs.
async fn mms_notification(State(gw): Gw, body: Bytes) -> ApiResult<StatusCode> {
    let mms = mms_manager(&gw)?.clone();
    match body.get(..2) {
        Some([0x8C, MMS_NOTIFICATION_IND]) => {
            let tx = mms.handle_notification(&body).await?;
            let n = tx.notification.clone().unwrap_or_default();
            gw.events().publish(
                EventKind::MmsNotification,
                json!({
                    "stage": "notified",
                    "transaction_id": tx.transaction_id,
                    "state": tx.state,
                    "from": n.from,
                    "subject": n.subject,
                    "message_size": n.message_size,
                    "content_location": n.content_location,
                }),
            );
            Ok(StatusCode::NO_CONTENT)
        }
        Some([0x8C, MMS_DELIVERY_IND]) => {
            mms.handle_delivery_ind(&body)?;
            Ok(StatusCode::NO_CONTENT)
        }
        Some([0x8C, other]) => Err(ApiError::bad_request(format!(
            "unexpected message type 0x{other:02X}"
        ))),
        _ => Err(ApiError::bad_request("not an MMS PDU")),
    }
}

// ---- calls

#[derive(Deserialize)]
struct Dial {
    to: String,
    remote: Option<SocketAddr>,
}

#[derive(Deserialize, Default)]
struct Answer {
    remote: Option<SocketAddr>,
}

fn call_view(s: &CallSession) -> Value {
    let mut v = to_json(s);
    v["call_id"] = json!(s.id);
    if let Some(RtpEndpoint {
        local,
        payload_type,
        ..
    }) = &s.rtp
    {
        v["rtp"]["addr"] = json!(local.ip());
        v["rtp"]["port"] = json!(local.port());
        v["rtp"]["payload_type"] = json!(payload_type);
    }
    v
}

fn require_voice(gw: &Gateway) -> ApiResult<()> {
    gw.ensure_ready()?;
    Ok(gw.services().require(Service::Voice)?)
}

async fn dial(State(gw): Gw, ApiJson(req): ApiJson<Dial>) -> ApiResult<impl IntoResponse> {
    require_voice(&gw)?;
    let s = gw.calls().dial(req.to.trim(), req.remote).await?;
    Ok((StatusCode::CREATED, Json(call_view(&s))))
}

async fn current_call(State(gw): Gw) -> Json<Value> {
    Json(
        gw.calls()
            .current()
            .map(|s| call_view(&s))
            .unwrap_or(Value::Null),
    )
}

async fn get_call(State(gw): Gw, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = gw
        .calls()
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown call {id}")))?;
    Ok(Json(call_view(&s)))
}

async fn answer(State(gw): Gw, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    require_voice(&gw)?;
    let req: Answer = optional_body(&body)?;
    let s = gw.calls().answer(&id, req.remote).await?;
    Ok(Json(call_view(&s)))
}

async fn hangup(State(gw): Gw, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = gw.calls().hangup(&id).await?;
    Ok(Json(call_view(&s)))
}

async fn call_audio(
    State(gw): Gw,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let tap = gw.calls().attach_audio(&id)?;
    Ok(ws.on_upgrade(move |socket| audio::relay(socket, tap)))
}

// ---- events

#[derive(Deserialize)]
struct EventsQuery {
    /// Resume cursor for clients that cannot set Last-Event-ID.
    after: Option<u64>,
}

fn sse_event(ev: &GatewayEvent) -> Event {
    Event::default()
        .id(ev.seq.to_string())
        .event(ev.kind.name())
        .data(serde_json::to_string(ev).unwrap_or_default())
}

async fn events(
    State(gw): Gw,
    headers: HeaderMap,
    Query(q): Query<EventsQuery>,
) -> ApiResult<impl IntoResponse> {
    let header_cursor = match headers.get("last-event-id") {
        Some(v) => Some(
            v.to_str()
                .ok()
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or_else(|| ApiError::bad_request("Last-Event-ID must be a sequence number"))?,
        ),
        None => None,
    };
    let cursor = header_cursor.or(q.after);
    let hub = gw.events().clone();
    let sub = hub.subscribe_from(cursor);
    if sub.gap {
        warn!(?cursor, "event stream resumed past the retention window");
    }
    struct St {
        backlog: std::collections::VecDeque<GatewayEvent>,
        live: tokio::sync::broadcast::Receiver<GatewayEvent>,
        last: u64,
        hub: Arc<super::EventHub>,
    }
    let last = cursor.unwrap_or(0);
    let st = St {
        backlog: sub.backlog.into(),
        live: sub.live,
        last,
        hub,
    };
    let stream = futures::stream::unfold(st, |mut st| async move {
        loop {
            if let Some(ev) = st.backlog.pop_front() {
                if ev.seq <= st.last {
                    continue;
                }
                st.last = ev.seq;
                return Some((Ok::<_, Infallible>(sse_event(&ev)), st));
            }
            match st.live.recv().await {
                Ok(ev) => st.backlog.push_back(ev),
                Err(RecvError::Lagged(_)) => {
                    let missed = st.hub.since(st.last);
                    st.backlog.extend(missed);
                    st.live = st.live.resubscribe();
                }
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream_boxed(stream)).keep_alive(KeepAlive::default()))
}

fn stream_boxed(
    s: impl Stream<Item = Result<Event, Infallible>> + Send + 'static,
) -> std::pin::Pin<Box<dyn Stream<Item = Result<Event, Infallible>> + Send>> {
    Box::pin(s)
}

// ---- modem, SIM, services

async fn modem_status(State(gw): Gw) -> ApiResult<Json<Value>> {
    gw.ensure_ready()?;
    let st = gw.services().status().await;
    let mut v = to_json(&st);
    v["ready"] = json!(true);
    v["profile"] = to_json(&gw.services().profile());
    Ok(Json(v))
}

#[derive(Deserialize)]
struct Apdu {
    apdu: String,
}

async fn sim_apdu(State(gw): Gw, ApiJson(req): ApiJson<Apdu>) -> ApiResult<Json<Value>> {
    gw.ensure_ready()?;
    let r = gw.services().sim_apdu(&req.apdu).await?;
    Ok(Json(json!({ "response": r })))
}

const SURVEILLANCE: &str = "surveillance";

fn builtin_personalized() -> PersonalizedService {
    PersonalizedService {
        name: SURVEILLANCE.into(),
        description: "SMS alert to a chosen number when motion is detected".into(),
        requires: vec![Service::Sms],
    }
}

async fn list_services(State(gw): Gw) -> ApiResult<Json<Value>> {
    gw.ensure_ready()?;
    let catalog = gw.services().refresh_catalog().await?;
    let mut services: Vec<Value> = catalog
        .derived_services
        .iter()
        .map(|s| json!({ "name": s.name(), "kind": "derived" }))
        .collect();
    let mut personalized = vec![builtin_personalized()];
    personalized.extend(gw.personalized.read().unwrap().values().cloned());
    for p in personalized {
        if p.requires.iter().all(|s| catalog.offers(*s)) {
            let mut v = to_json(&p);
            v["kind"] = json!("personalized");
            services.push(v);
        }
    }
    let names: Vec<&str> = services.iter().filter_map(|s| s["name"].as_str()).collect();
    Ok(Json(json!({
        "names": names,
        "services": services,
        "source": catalog.source,
        "supported_commands": catalog.supported_commands,
    })))
}

async fn register_service(
    State(gw): Gw,
    ApiJson(p): ApiJson<PersonalizedService>,
) -> ApiResult<impl IntoResponse> {
    let valid = !p.name.is_empty()
        && p.name.len() <= 64
        && p.name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if !valid {
        return Err(ApiError::bad_request(
            "service name must match [A-Za-z0-9_-]{1,64}",
        ));
    }
    let taken = p.name == SURVEILLANCE
        || [
            Service::Sms,
            Service::Mms,
            Service::Voice,
            Service::Phonebook,
            Service::SimAccess,
        ]
        .iter()
        .any(|s| s.name() == p.name);
    if taken {
        return Err(ApiError::conflict(format!(
            "{} is a built-in service",
            p.name
        )));
    }
    gw.personalized
        .write()
        .unwrap()
        .insert(p.name.clone(), p.clone());
    Ok((StatusCode::CREATED, Json(p)))
}

async fn get_surveillance(State(gw): Gw) -> Json<Value> {
    Json(to_json(&gw.surveillance()))
}

async fn put_surveillance(
    State(gw): Gw,
    ApiJson(cfg): ApiJson<SurveillanceConfig>,
) -> ApiResult<Json<Value>> {
    cfg.validate().map_err(ApiError::bad_request)?;
    *gw.surveillance.write().unwrap() = Some(cfg.clone());
    Ok(Json(to_json(&cfg)))
}

async fn motion(State(gw): Gw) -> ApiResult<impl IntoResponse> {
    let cfg = gw
        .surveillance()
        .filter(|c| c.enabled)
        .ok_or_else(|| ApiError::conflict("surveillance is not enabled"))?;
    gw.ensure_ready()?;
    gw.services().require(Service::Sms)?;
    let at = Utc::now();
    let text = cfg.render(at);
    let id = new_id("alert");
    let accepted = json!({ "alert_id": id, "to": cfg.alert_number, "text": text, "at": at });
    let gw2 = gw.clone();
    tokio::spawn(async move {
        let outcome = dispatch_sms(&gw2, &cfg.alert_number, &text).await;
        let mut payload = json!({
            "service": SURVEILLANCE,
            "alert_id": id,
            "to": cfg.alert_number,
            "text": text,
            "at": at,
        });
        match outcome {
            Ok(report) => {
                info!(alert = id, "surveillance alert sent");
                payload["sent"] = json!(true);
                payload["segments"] = json!(report.segments.len());
            }
            Err(e) => {
                warn!(alert = id, "surveillance alert failed: {}", e.message);
                payload["sent"] = json!(false);
                payload["error"] = json!(e.message);
            }
        }
        gw2.events().publish(EventKind::ServiceAlert, payload);
    });
    Ok((StatusCode::ACCEPTED, Json(accepted)))
}

// ---- phonebook and data

#[derive(Deserialize)]
struct PhonebookQuery {
    find: Option<String>,
}

#[derive(Deserialize)]
struct ContactBody {
    number: String,
    text: String,
}

#[derive(Deserialize)]
struct Contacts {
    contacts: Vec<Contact>,
}

async fn list_phonebook(State(gw): Gw, Query(q): Query<PhonebookQuery>) -> ApiResult<Json<Value>> {
    gw.ensure_ready()?;
    let svc = gw.services();
    let entries = match q.find {
        Some(f) => svc.phonebook_find(&f).await?,
        None => svc.phonebook_read_all().await?,
    };
    Ok(Json(to_json(&entries)))
}

async fn add_contact(
    State(gw): Gw,
    ApiJson(c): ApiJson<ContactBody>,
) -> ApiResult<impl IntoResponse> {
    gw.ensure_ready()?;
    let index = gw
        .services()
        .phonebook_write(None, &c.number, &c.text)
        .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "index": index, "number": c.number, "text": c.text })),
    ))
}

/// Adds every contact not already present.
async fn put_phonebook(State(gw): Gw, ApiJson(req): ApiJson<Contacts>) -> ApiResult<Json<Value>> {
    gw.ensure_ready()?;
    let svc = gw.services();
    let snap = svc.snapshot().await?;
    let edits = snapshot::diff(&snap, &req.contacts);
    let results = svc.sync(&snap, &edits).await;
    Ok(Json(json!({ "results": results })))
}

async fn get_contact(State(gw): Gw, Path(index): Path<u32>) -> ApiResult<Json<Value>> {
    gw.ensure_ready()?;
    let entries = gw.services().phonebook_read(index, None).await?;
    let e = entries
        .into_iter()
        .find(|e| e.index == index)
        .ok_or_else(|| ApiError::not_found(format!("no entry at {index}")))?;
    Ok(Json(to_json(&e)))
}

async fn put_contact(
    State(gw): Gw,
    Path(index): Path<u32>,
    ApiJson(c): ApiJson<ContactBody>,
) -> ApiResult<Json<Value>> {
    gw.ensure_ready()?;
    let idx = gw
        .services()
        .phonebook_write(Some(index), &c.number, &c.text)
        .await?;
    Ok(Json(
        json!({ "index": idx.unwrap_or(index), "number": c.number, "text": c.text }),
    ))
}

async fn delete_contact(State(gw): Gw, Path(index): Path<u32>) -> ApiResult<StatusCode> {
    gw.ensure_ready()?;
    gw.services().phonebook_delete(index).await?;
    Ok(StatusCode::NO_CONTENT)
}

pub const SNAPSHOT_OWNER: &str = "gateway";
pub const SNAPSHOT_PATH: &str = "snapshot.json";

async fn take_snapshot(State(gw): Gw) -> ApiResult<Json<Value>> {
    gw.ensure_ready()?;
    let snap = gw.services().snapshot().await?;
    let doc = to_json(&snap);
    let bytes = serde_json::to_vec_pretty(&doc).unwrap_or_default();
    gw.shares()
        .write(SNAPSHOT_OWNER, SNAPSHOT_PATH, &bytes)
        .await?;
    Ok(Json(doc))
}

#[derive(Deserialize)]
struct SyncReq {
    snapshot: DataSnapshot,
    #[serde(default)]
    edits: Vec<SyncEdit>,
    #[serde(default)]
    contacts: Vec<Contact>,
}

async fn sync(State(gw): Gw, ApiJson(req): ApiJson<SyncReq>) -> ApiResult<Json<Value>> {
    gw.ensure_ready()?;
    let mut edits = req.edits;
    edits.extend(snapshot::diff(&req.snapshot, &req.contacts));
    let results = gw.services().sync(&req.snapshot, &edits).await;
    Ok(Json(json!({ "results": results })))
}

// ---- shares

async fn list_share(State(gw): Gw, Path(owner): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(to_json(&gw.shares().list(&owner).await?)))
}

async fn read_share(
    State(gw): Gw,
    Path((owner, path)): Path<(String, String)>,
) -> ApiResult<Response> {
    let (data, ct) = gw.shares().read(&owner, &path).await?;
    Ok(([(header::CONTENT_TYPE, ct)], data).into_response())
}

async fn write_share(
    State(gw): Gw,
    Extension(caller): Extension<Caller>,
    Path((owner, path)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    super::share::validate_path(&path)?;
    if !super::share::valid_owner(&owner) {
        return Err(super::share::ShareError::InvalidOwner(owner).into());
    }
    match &caller {
        Caller::Admin => {}
        Caller::Owner(o) if *o == owner => {}
        Caller::Owner(o) => {
            return Err(ApiError::forbidden(format!(
                "{o} may only write its own share"
            )))
        }
    }
    let entry = gw.shares().write(&owner, &path, &body).await?;
    Ok((StatusCode::CREATED, Json(entry)))
}
