//! A mock MMS relay/server. It reads and writes PDUs with its own byte-level
//! code rather than the gateway's codec, so each side checks the other.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

const CONTENT_TYPE: &str = "application/vnd.wap.mms-message";

mod code {
    pub const BCC: u8 = 0x81;
    pub const CC: u8 = 0x82;
    pub const CONTENT_LOCATION: u8 = 0x83;
    pub const CONTENT_TYPE: u8 = 0x84;
    pub const DATE: u8 = 0x85;
    pub const DELIVERY_REPORT: u8 = 0x86;
    pub const EXPIRY: u8 = 0x88;
    pub const FROM: u8 = 0x89;
    pub const MESSAGE_CLASS: u8 = 0x8A;
    pub const MESSAGE_ID: u8 = 0x8B;
    pub const MESSAGE_TYPE: u8 = 0x8C;
    pub const VERSION: u8 = 0x8D;
    pub const MESSAGE_SIZE: u8 = 0x8E;
    pub const RESPONSE_STATUS: u8 = 0x92;
    pub const STATUS: u8 = 0x95;
    pub const SUBJECT: u8 = 0x96;
    pub const TO: u8 = 0x97;
    pub const TRANSACTION_ID: u8 = 0x98;
}

/// One header as found on the wire: field octet and raw value bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawField {
    pub field: u8,
    pub value: Vec<u8>,
}

fn read_uintvar(b: &[u8], p: &mut usize) -> Option<usize> {
    let mut v = 0usize;
    for _ in 0..5 {
        let o = *b.get(*p)?;
        *p += 1;
        v = (v << 7) | (o & 0x7F) as usize;
        if o & 0x80 == 0 {
            return Some(v);
        }
    }
    None
}

/// Length of the generic WSP value starting at `p`.
fn value_len(b: &[u8], p: usize) -> Option<usize> {
    let first = *b.get(p)?;
    Some(match first {
        0x00..=0x1E => 1 + first as usize,
        0x1F => {
            let mut q = p + 1;
            let len = read_uintvar(b, &mut q)?;
            q - p + len
        }
        0x20..=0x7F => b[p..].iter().position(|&c| c == 0)? + 1,
        _ => 1,
    })
}

/// Splits a PDU into its header fields and the body following
/// Content-Type (if any).
pub fn scan(pdu: &[u8]) -> Option<(Vec<RawField>, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut p = 0;
    while p < pdu.len() {
        let field = pdu[p];
        if field < 0x80 {
            // application header: name text then value text
            let name_len = pdu[p..].iter().position(|&c| c == 0)? + 1;
            let vlen = value_len(pdu, p + name_len)?;
            p += name_len + vlen;
            continue;
        }
        let len = value_len(pdu, p + 1)?;
        let value = pdu.get(p + 1..p + 1 + len)?.to_vec();
        p += 1 + len;
        fields.push(RawField { field, value });
        if field == code::CONTENT_TYPE {
            return Some((fields, pdu[p..].to_vec()));
        }
    }
    Some((fields, Vec::new()))
}

fn text_of(value: &[u8]) -> String {
    let v = value.strip_prefix(&[0x7F]).unwrap_or(value);
    String::from_utf8_lossy(v.strip_suffix(&[0]).unwrap_or(v)).into_owned()
}

/// Text of an encoded-string value, plain or charset-tagged.
fn encoded_text(value: &[u8]) -> String {
    match value.first() {
        Some(&l) if l <= 0x1F => {
            let mut p = if l == 0x1F {
                let mut q = 1;
                read_uintvar(value, &mut q);
                q
            } else {
                1
            };
            // skip the charset (short or long integer)
            match value.get(p) {
                Some(&c) if c >= 0x80 => p += 1,
                Some(&n) => p += 1 + n as usize,
                None => {}
            }
            text_of(value.get(p..).unwrap_or_default())
        }
        _ => text_of(value),
    }
}

fn push_text(out: &mut Vec<u8>, s: &str) {
    if s.as_bytes().first().is_some_and(|&b| b >= 0x80) {
        out.push(0x7F);
    }
    out.extend_from_slice(s.as_bytes());
    out.push(0);
}

fn push_long(out: &mut Vec<u8>, v: u64) {
    let bytes = v.to_be_bytes();
    let skip = bytes.iter().take_while(|&&b| b == 0).count().min(7);
    out.push((8 - skip) as u8);
    out.extend_from_slice(&bytes[skip..]);
}

fn push_uintvar(out: &mut Vec<u8>, mut v: usize) {
    let mut groups = vec![(v & 0x7F) as u8];
    v >>= 7;
    while v > 0 {
        groups.push((v & 0x7F) as u8 | 0x80);
        v >>= 7;
    }
    groups.reverse();
    out.extend(groups);
}

fn head(message_type: u8, tid: Option<&str>) -> Vec<u8> {
    let mut out = vec![code::MESSAGE_TYPE, message_type];
    if let Some(t) = tid {
        out.push(code::TRANSACTION_ID);
        push_text(&mut out, t);
    }
    out.extend([code::VERSION, 0x92]);
    out
}

pub fn send_conf(tid: &str, response_status: u8, message_id: Option<&str>) -> Vec<u8> {
    let mut out = head(0x81, Some(tid));
    out.extend([code::RESPONSE_STATUS, response_status]);
    if let Some(m) = message_id {
        out.push(code::MESSAGE_ID);
        push_text(&mut out, m);
    }
    out
}

pub fn notification_ind(
    tid: &str,
    from: &str,
    size: u64,
    expiry_secs: u64,
    location: &str,
) -> Vec<u8> {
    let mut out = head(0x82, Some(tid));
    out.push(code::FROM);
    let mut addr = vec![0x80];
    push_text(&mut addr, from);
    out.push(addr.len() as u8);
    out.extend(addr);
    out.extend([code::MESSAGE_CLASS, 0x80]);
    out.push(code::MESSAGE_SIZE);
    push_long(&mut out, size);
    out.push(code::EXPIRY);
    let mut exp = vec![0x81];
    push_long(&mut exp, expiry_secs);
    out.push(exp.len() as u8);
    out.extend(exp);
    out.push(code::CONTENT_LOCATION);
    push_text(&mut out, location);
    out
}

pub fn retrieve_conf(msg: &StoredMessage, tid: &str) -> Vec<u8> {
    let mut out = head(0x84, Some(tid));
    out.push(code::MESSAGE_ID);
    push_text(&mut out, &msg.message_id);
    out.push(code::DATE);
    push_long(&mut out, msg.date);
    out.push(code::FROM);
    let mut addr = vec![0x80];
    push_text(&mut addr, &msg.from);
    out.push(addr.len() as u8);
    out.extend(addr);
    for to in &msg.to {
        out.push(code::TO);
        push_text(&mut out, to);
    }
    if let Some(s) = &msg.subject {
        out.push(code::SUBJECT);
        push_text(&mut out, s);
    }
    out.extend([
        code::DELIVERY_REPORT,
        if msg.ack_requested { 0x80 } else { 0x81 },
    ]);
    // multipart.mixed with one text/plain part
    out.extend([code::CONTENT_TYPE, 0xA3]);
    push_uintvar(&mut out, 1);
    let headers = [0x83u8];
    push_uintvar(&mut out, headers.len());
    push_uintvar(&mut out, msg.text.len());
    out.extend(headers);
    out.extend(msg.text.as_bytes());
    out
}

pub fn delivery_ind(message_id: &str, to: &str, status: u8, date: u64) -> Vec<u8> {
    let mut out = head(0x86, None);
    out.push(code::MESSAGE_ID);
    push_text(&mut out, message_id);
    out.push(code::TO);
    push_text(&mut out, to);
    out.push(code::DATE);
    push_long(&mut out, date);
    out.extend([code::STATUS, status]);
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct StoredMessage {
    pub message_id: String,
    pub from: String,
    pub to: Vec<String>,
    pub subject: Option<String>,
    pub text: String,
    pub ack_requested: bool,
    pub date: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct LogEntry {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transaction_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<u8>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<&'static str>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub to: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parts: Option<usize>,
}

/// Failure injection for the HTTP legs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Behavior {
    /// Delay before every response.
    pub stall_ms: u64,
    /// Reply with this HTTP status instead of handling the request.
    pub http_status: Option<u16>,
    /// Response-Status octet for send-conf (0x80 = Ok).
    pub response_status: Option<u8>,
}

#[derive(Default)]
struct MmscState {
    messages: HashMap<String, StoredMessage>,
    log: Vec<LogEntry>,
    behavior: Behavior,
}

#[derive(Clone)]
pub struct MockMmsc {
    state: Arc<Mutex<MmscState>>,
    counter: Arc<AtomicU64>,
    base_url: Arc<Mutex<String>>,
    http: reqwest::Client,
}

pub struct MmscServer {
    pub mmsc: MockMmsc,
    pub addr: std::net::SocketAddr,
    task: JoinHandle<()>,
}

impl Drop for MmscServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

impl MmscServer {
    /// URL to configure as the gateway's MMSC.
    pub fn url(&self) -> String {
        format!("http://{}/mms", self.addr)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct Deliver {
    pub from: String,
    #[serde(default)]
    pub to: Vec<String>,
    pub subject: Option<String>,
    pub text: String,
    #[serde(default = "yes")]
    pub ack: bool,
    #[serde(default = "day")]
    pub expiry_secs: u64,
    /// Gateway notification endpoint and its bearer token.
    pub notify_url: String,
    pub token: Option<String>,
}

fn yes() -> bool {
    true
}

fn day() -> u64 {
    86_400
}

#[derive(Debug, Clone, Deserialize)]
pub struct DeliveryReportReq {
    pub message_id: String,
    pub to: String,
    #[serde(default = "retrieved")]
    pub status: u8,
    pub notify_url: String,
    pub token: Option<String>,
}

fn retrieved() -> u8 {
    0x81
}

#[derive(Debug, Clone, Serialize)]
pub struct Delivered {
    pub transaction_id: String,
    pub message_id: String,
    pub content_location: String,
    pub notify_status: u16,
}

impl Default for MockMmsc {
    fn default() -> Self {
        Self::new()
    }
}

impl MockMmsc {
    pub fn new() -> Self {
        MockMmsc {
            state: Arc::default(),
            counter: Arc::new(AtomicU64::new(0)),
            base_url: Arc::new(Mutex::new("http://127.0.0.1/mms".into())),
            http: reqwest::Client::new(),
        }
    }

    pub async fn listen(&self, host: &str, port: u16) -> std::io::Result<MmscServer> {
        let listener = TcpListener::bind((host, port)).await?;
        let addr = listener.local_addr()?;
        *self.base_url.lock().unwrap() = format!("http://{addr}/mms");
        let app = self.router();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(MmscServer {
            mmsc: self.clone(),
            addr,
            task,
        })
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/mms", post(post_pdu))
            .route("/mms/:id", get(get_message))
            .route("/ctl/deliver", post(ctl_deliver))
            .route("/ctl/delivery_report", post(ctl_delivery_report))
            .route("/ctl/behavior", post(ctl_behavior))
            .route("/ctl/log", get(ctl_log))
            .with_state(self.clone())
    }

    fn next_id(&self, prefix: &str) -> String {
        format!(
            "{prefix}{}",
            self.counter.fetch_add(1, Ordering::Relaxed) + 1
        )
    }

    pub fn log(&self) -> Vec<LogEntry> {
        self.state.lock().unwrap().log.clone()
    }

    pub fn set_behavior(&self, b: Behavior) {
        self.state.lock().unwrap().behavior = b;
    }

    fn record(&self, e: LogEntry) {
        self.state.lock().unwrap().log.push(e);
    }

    /// Handles one POSTed PDU and returns the response body.
    pub fn handle_post(&self, pdu: &[u8]) -> Result<Vec<u8>, StatusCode> {
        let (fields, body) = scan(pdu).ok_or(StatusCode::BAD_REQUEST)?;
        let first = fields.first().ok_or(StatusCode::BAD_REQUEST)?;
        if first.field != code::MESSAGE_TYPE || first.value.len() != 1 {
            return Err(StatusCode::BAD_REQUEST);
        }
        let get = |f: u8| fields.iter().find(|x| x.field == f);
        let tid = get(code::TRANSACTION_ID).map(|f| text_of(&f.value));
        let entry = |kind: &str| LogEntry {
            kind: kind.into(),
            transaction_id: tid.clone(),
            message_id: None,
            status: None,
            missing: vec![],
            to: vec![],
            parts: None,
        };
        match first.value[0] {
            0x80 => {
                let mut missing = Vec::new();
                for (f, name) in [
                    (code::TRANSACTION_ID, "transaction-id"),
                    (code::VERSION, "mms-version"),
                    (code::FROM, "from"),
                    (code::CONTENT_TYPE, "content-type"),
                ] {
                    if get(f).is_none() {
                        missing.push(name);
                    }
                }
                if !fields
                    .iter()
                    .any(|f| matches!(f.field, code::TO | code::CC | code::BCC))
                {
                    missing.push("to");
                }
                let to: Vec<String> = fields
                    .iter()
                    .filter(|f| f.field == code::TO)
                    .map(|f| encoded_text(&f.value))
                    .collect();
                let parts = {
                    let mut p = 0;
                    read_uintvar(&body, &mut p)
                };
                let forced = self.state.lock().unwrap().behavior.response_status;
                let (status, mid) = if !missing.is_empty() {
                    (0x83, None) // message-format-corrupt
                } else if let Some(s) = forced.filter(|&s| s != 0x80) {
                    (s, None)
                } else {
                    let mid = self.next_id("msg-");
                    (0x80, Some(mid))
                };
                self.record(LogEntry {
                    message_id: mid.clone(),
                    status: Some(status),
                    missing,
                    to,
                    parts,
                    ..entry("send_req")
                });
                Ok(send_conf(
                    tid.as_deref().unwrap_or(""),
                    status,
                    mid.as_deref(),
                ))
            }
            0x83 => {
                self.record(LogEntry {
                    status: get(code::STATUS).and_then(|f| f.value.first().copied()),
                    ..entry("notifyresp_ind")
                });
                Ok(Vec::new())
            }
            0x85 => {
                self.record(entry("acknowledge_ind"));
                Ok(Vec::new())
            }
            _ => Err(StatusCode::BAD_REQUEST),
        }
    }

    /// Stores a message for the gateway and pushes its notification.
    pub async fn deliver(&self, d: Deliver) -> Result<Delivered, String> {
        let message_id = self.next_id("in-");
        let tid = self.next_id("T");
        let location = format!("{}/{}", self.base_url.lock().unwrap(), message_id);
        let msg = StoredMessage {
            message_id: message_id.clone(),
            from: d.from.clone(),
            to: d.to.clone(),
            subject: d.subject.clone(),
            text: d.text.clone(),
            ack_requested: d.ack,
            date: chrono::Utc::now().timestamp() as u64,
        };
        let size = d.text.len() as u64;
        self.state
            .lock()
            .unwrap()
            .messages
            .insert(message_id.clone(), msg);
        let pdu = notification_ind(&tid, &d.from, size, d.expiry_secs, &location);
        let status = self.push(&d.notify_url, d.token.as_deref(), pdu).await?;
        Ok(Delivered {
            transaction_id: tid,
            message_id,
            content_location: location,
            notify_status: status,
        })
    }

    pub async fn delivery_report(&self, r: DeliveryReportReq) -> Result<u16, String> {
        let pdu = delivery_ind(
            &r.message_id,
            &r.to,
            r.status,
            chrono::Utc::now().timestamp() as u64,
        );
        self.push(&r.notify_url, r.token.as_deref(), pdu).await
    }

    async fn push(&self, url: &str, token: Option<&str>, pdu: Vec<u8>) -> Result<u16, String> {
        let mut req = self
            .http
            .post(url)
            .header(header::CONTENT_TYPE, CONTENT_TYPE)
            .body(pdu);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        req.send()
            .await
            .map(|r| r.status().as_u16())
            .map_err(|e| e.to_string())
    }
}

async fn behave(m: &MockMmsc) -> Option<StatusCode> {
    let b = m.state.lock().unwrap().behavior.clone();
    if b.stall_ms > 0 {
        tokio::time::sleep(Duration::from_millis(b.stall_ms)).await;
    }
    b.http_status.and_then(|s| StatusCode::from_u16(s).ok())
}

fn pdu_response(body: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, CONTENT_TYPE)], body).into_response()
}

async fn post_pdu(State(m): State<MockMmsc>, body: Bytes) -> Response {
    if let Some(s) = behave(&m).await {
        return s.into_response();
    }
    match m.handle_post(&body) {
        Ok(b) => pdu_response(b),
        Err(s) => s.into_response(),
    }
}

async fn get_message(State(m): State<MockMmsc>, Path(id): Path<String>) -> Response {
    if let Some(s) = behave(&m).await {
        return s.into_response();
    }
    let msg = m.state.lock().unwrap().messages.get(&id).cloned();
    match msg {
        Some(msg) => {
            m.record(LogEntry {
                kind: "get".into(),
                transaction_id: None,
                message_id: Some(id.clone()),
                status: None,
                missing: vec![],
                to: vec![],
                parts: None,
            });
            let tid = m.next_id("R");
            pdu_response(retrieve_conf(&msg, &tid))
        }
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn ctl_deliver(State(m): State<MockMmsc>, Json(d): Json<Deliver>) -> Response {
    match m.deliver(d).await {
        Ok(r) => Json(r).into_response(),
        Err(e) => (StatusCode::BAD_GATEWAY, e).into_response(),
    }
}

async fn ctl_delivery_report(
    State(m): State<MockMmsc>,
    Json(r): Json<DeliveryReportReq>,
) -> Response {
    match m.delivery_report(r).await {
        Ok(s) => Json(serde_json::json!({ "notify_status": s })).into_response(),
        Err(e) => (StatusCode::BAD_GATEWAY, e).into_response(),
    }
}

async fn ctl_behavior(State(m): State<MockMmsc>, Json(b): Json<Behavior>) -> StatusCode {
    m.set_behavior(b);
    StatusCode::OK
}

async fn ctl_log(State(m): State<MockMmsc>) -> Json<Vec<LogEntry>> {
    Json(m.log())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scans_hand_built_pdus() {
        let conf = send_conf("T1", 0x80, Some("m1"));
        assert_eq!(
            conf,
            [0x8C, 0x81, 0x98, b'T', b'1', 0, 0x8D, 0x92, 0x92, 0x80, 0x8B, b'm', b'1', 0]
        );
        let (fields, body) = scan(&conf).unwrap();
        assert_eq!(fields.len(), 5);
        assert!(body.is_empty());
        let n = notification_ind("T2", "+3361/TYPE=PLMN", 300, 3600, "http://mmsc/x1");
        let (fields, _) = scan(&n).unwrap();
        let loc = fields
            .iter()
            .find(|f| f.field == code::CONTENT_LOCATION)
            .unwrap();
        assert_eq!(text_of(&loc.value), "http://mmsc/x1");
    }

    #[test]
    fn send_req_validation() {
        let m = MockMmsc::new();
        // type, tid, version, no from, no to, content-type
        let pdu = [0x8C, 0x80, 0x98, b'A', 0, 0x8D, 0x92, 0x84, 0xA3, 0x00];
        let conf = m.handle_post(&pdu).unwrap();
        assert_eq!(conf[7..9], [0x92, 0x83]);
        assert_eq!(m.log()[0].missing, vec!["from", "to"]);
    }
}
