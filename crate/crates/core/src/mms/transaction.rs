use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;
use tracing::{info, warn};

use super::pdu::{
    self, Expiry, From, MessageType, MmsBody, MmsHeaders, MmsPart, MmsPdu, MmsStatus,
    ResponseStatus,
};
use super::{MmsClient, MmsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Send,
    Receive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxState {
    Idle,
    SendReqSent,
    Confirmed,
    Notified,
    NotifyRespSent,
    Retrieving,
    Retrieved,
    Acknowledged,
    Failed,
}

impl TxState {
    pub fn can_go(self, dir: Direction, to: TxState) -> bool {
        use TxState::*;
        match dir {
            Direction::Send => matches!(
                (self, to),
                (Idle, SendReqSent)
                    | (Idle, Failed)
                    | (SendReqSent, Confirmed)
                    | (SendReqSent, Failed)
            ),
            Direction::Receive => matches!(
                (self, to),
                (Idle, Notified)
                    | (Notified, NotifyRespSent)
                    | (Notified, Retrieving)
                    | (Notified, Failed)
                    | (NotifyRespSent, Retrieving)
                    | (NotifyRespSent, Failed)
                    | (Retrieving, Retrieved)
                    | (Retrieving, Failed)
                    | (Retrieved, Acknowledged)
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transition {
    pub state: TxState,
    pub at: DateTime<Utc>,
    /// Milliseconds since the transaction was created, from the monotonic clock.
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub message_id: String,
    pub status: MmsStatus,
    pub recipient: Option<String>,
    pub date: Option<u64>,
    /// Transaction that sent the message, when known.
    pub transaction_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmsTransaction {
    pub transaction_id: String,
    pub direction: Direction,
    pub state: TxState,
    pub history: Vec<Transition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_status: Option<ResponseStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notification: Option<MmsHeaders>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<MmsPdu>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub delivery_reports: Vec<DeliveryReport>,
    #[serde(skip)]
    created: Option<Instant>,
}

impl MmsTransaction {
    fn new(transaction_id: String, direction: Direction) -> Self {
        let mut tx = MmsTransaction {
            transaction_id,
            direction,
            state: TxState::Idle,
            history: Vec::new(),
            message_id: None,
            failure: None,
            response_status: None,
            notification: None,
            message: None,
            delivery_reports: Vec::new(),
            created: Some(Instant::now()),
        };
        tx.record();
        tx
    }

    fn record(&mut self) {
        let elapsed = self.created.map(|c| c.elapsed()).unwrap_or_default();
        self.history.push(Transition {
            state: self.state,
            at: Utc::now(),
            elapsed_ms: elapsed.as_millis() as u64,
        });
    }

    fn go(&mut self, to: TxState) -> Result<(), MmsError> {
        if !self.state.can_go(self.direction, to) {
            return Err(MmsError::InvalidState {
                id: self.transaction_id.clone(),
                state: self.state,
                action: "transition",
            });
        }
        self.state = to;
        self.record();
        Ok(())
    }

    fn fail(&mut self, reason: impl Into<String>) {
        let reason = reason.into();
        if self.go(TxState::Failed).is_ok() {
            self.failure = Some(reason);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MmsEvent {
    State {
        transaction_id: String,
        direction: Direction,
        state: TxState,
    },
    Received {
        transaction_id: String,
        message: Box<MmsPdu>,
    },
    DeliveryReport(DeliveryReport),
}

#[derive(Debug, Clone)]
pub struct MmsConfig {
    pub mmsc_url: String,
    pub timeout: Duration,
    /// Status sent in m-notifyresp-ind.
    pub notify_status: MmsStatus,
    pub auto_retrieve: bool,
}

impl MmsConfig {
    pub fn new(mmsc_url: impl Into<String>) -> Self {
        MmsConfig {
            mmsc_url: mmsc_url.into(),
            timeout: Duration::from_secs(5),
            notify_status: MmsStatus::Deferred,
            auto_retrieve: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SendRequest {
    pub to: Vec<String>,
    #[serde(default)]
    pub cc: Vec<String>,
    #[serde(default)]
    pub subject: Option<String>,
    pub parts: Vec<MmsPart>,
    #[serde(default)]
    pub delivery_report: bool,
}

/// Normalises a phone number to the MMS address form `+123/TYPE=PLMN`;
/// e-mail addresses and already-typed values pass through.
pub fn mms_address(addr: &str) -> String {
    if addr.contains('@') || addr.contains("/TYPE=") {
        addr.to_owned()
    } else {
        format!("{addr}/TYPE=PLMN")
    }
}

fn new_transaction_id() -> String {
    let n: u64 = rand::thread_rng().gen();
    format!("{n:016x}")
}

pub struct MmsManager {
    cfg: MmsConfig,
    client: MmsClient,
    txs: Mutex<HashMap<String, MmsTransaction>>,
    by_message_id: Mutex<HashMap<String, String>>,
    events: broadcast::Sender<MmsEvent>,
}

impl MmsManager {
    pub fn new(cfg: MmsConfig) -> Arc<Self> {
        let (events, _) = broadcast::channel(256);
        Arc::new(MmsManager {
            client: MmsClient::new(cfg.timeout),
            cfg,
            txs: Mutex::new(HashMap::new()),
            by_message_id: Mutex::new(HashMap::new()),
            events,
        })
    }

    pub fn config(&self) -> &MmsConfig {
        &self.cfg
    }

    pub fn subscribe(&self) -> broadcast::Receiver<MmsEvent> {
        self.events.subscribe()
    }

    /// Looks a transaction up by transaction id or message id.
    pub fn get(&self, id: &str) -> Option<MmsTransaction> {
        let txs = self.txs.lock().unwrap();
        if let Some(tx) = txs.get(id) {
            return Some(tx.clone());
        }
        let tid = self.by_message_id.lock().unwrap().get(id).cloned()?;
        txs.get(&tid).cloned()
    }

    pub fn list(&self) -> Vec<MmsTransaction> {
        let mut v: Vec<_> = self.txs.lock().unwrap().values().cloned().collect();
        v.sort_by_key(|t| t.history.first().map(|h| h.at));
        v
    }

    fn insert(&self, tx: MmsTransaction) {
        self.emit_state(&tx);
        self.txs
            .lock()
            .unwrap()
            .insert(tx.transaction_id.clone(), tx);
    }

    fn update<R>(
        &self,
        tid: &str,
        f: impl FnOnce(&mut MmsTransaction) -> R,
    ) -> Result<R, MmsError> {
        let mut txs = self.txs.lock().unwrap();
        let tx = txs
            .get_mut(tid)
            .ok_or_else(|| MmsError::UnknownTransaction(tid.to_owned()))?;
        let before = tx.state;
        let r = f(tx);
        if tx.state != before {
            let snapshot = tx.clone();
            drop(txs);
            self.emit_state(&snapshot);
        }
        Ok(r)
    }

    fn advance(&self, tid: &str, to: TxState) -> Result<(), MmsError> {
        self.update(tid, |tx| tx.go(to))?
    }

    fn fail(&self, tid: &str, reason: impl Into<String>) {
        let reason = reason.into();
        warn!(tid, "MMS transaction failed: {reason}");
        let _ = self.update(tid, |tx| tx.fail(reason));
    }

    fn emit_state(&self, tx: &MmsTransaction) {
        let _ = self.events.send(MmsEvent::State {
            transaction_id: tx.transaction_id.clone(),
            direction: tx.direction,
            state: tx.state,
        });
    }

    fn snapshot(&self, tid: &str) -> Result<MmsTransaction, MmsError> {
        self.get(tid)
            .ok_or_else(|| MmsError::UnknownTransaction(tid.to_owned()))
    }

    /// Builds and submits an m-send-req. Validation errors are returned
    /// before a transaction is created; transport and MMSC failures leave the
    /// transaction in `Failed`.
    pub async fn send(&self, req: SendRequest) -> Result<MmsTransaction, MmsError> {
        if req.to.is_empty() && req.cc.is_empty() {
            return Err(MmsError::InvalidRequest("no recipients".into()));
        }
        if req.parts.is_empty() {
            return Err(MmsError::InvalidRequest("no parts".into()));
        }
        let tid = new_transaction_id();
        let mut h = MmsHeaders::new();
        h.transaction_id = Some(tid.clone());
        h.from = Some(From::InsertToken);
        h.to = req.to.iter().map(|a| mms_address(a)).collect();
        h.cc = req.cc.iter().map(|a| mms_address(a)).collect();
        h.subject = req.subject.clone();
        h.date = Some(Utc::now().timestamp() as u64);
        if req.delivery_report {
            h.delivery_report = Some(true);
        }
        let content_type = if req
            .parts
            .iter()
            .any(|p| p.content_type == "application/smil")
        {
            "application/vnd.wap.multipart.related"
        } else {
            "application/vnd.wap.multipart.mixed"
        };
        let pdu = MmsPdu {
            message_type: MessageType::SendReq,
            headers: h,
            body: Some(MmsBody {
                content_type: content_type.into(),
                parts: req.parts,
            }),
        };
        let bytes = pdu::encode(&pdu)?;
        self.insert(MmsTransaction::new(tid.clone(), Direction::Send));
        self.advance(&tid, TxState::SendReqSent)?;
        let reply = match self.client.post(&self.cfg.mmsc_url, bytes).await {
            Ok(r) => r,
            Err(e) => {
                self.fail(&tid, e.to_string());
                return self.snapshot(&tid);
            }
        };
        let conf = match pdu::decode(&reply) {
            Ok(c) if c.message_type == MessageType::SendConf => c,
            Ok(c) => {
                self.fail(&tid, format!("unexpected {:?}", c.message_type));
                return self.snapshot(&tid);
            }
            Err(e) => {
                self.fail(&tid, e.to_string());
                return self.snapshot(&tid);
            }
        };
        let status = conf
            .headers
            .response_status
            .unwrap_or(ResponseStatus::ErrorUnspecified);
        let message_id = conf.headers.message_id.clone();
        self.update(&tid, |tx| {
            tx.response_status = Some(status);
            tx.message_id = message_id.clone();
        })?;
        if status == ResponseStatus::Ok {
            if let Some(mid) = message_id {
                self.by_message_id.lock().unwrap().insert(mid, tid.clone());
            }
            self.advance(&tid, TxState::Confirmed)?;
        } else {
            let text = conf.headers.response_text.unwrap_or_default();
            self.fail(
                &tid,
                format!("MMSC response status {status:?} {text}")
                    .trim()
                    .to_owned(),
            );
        }
        self.snapshot(&tid)
    }

    /// Handles a pushed m-notification-ind. Duplicate transaction ids return
    /// the existing transaction unchanged.
    pub async fn handle_notification(
        self: &Arc<Self>,
        bytes: &[u8],
    ) -> Result<MmsTransaction, MmsError> {
        let pdu = pdu::decode(bytes)?;
        if pdu.message_type != MessageType::NotificationInd {
            return Err(MmsError::UnexpectedType {
                expected: MessageType::NotificationInd,
                got: pdu.message_type,
            });
        }
        let tid = pdu
            .headers
            .transaction_id
            .clone()
            .ok_or(MmsError::MissingHeader("transaction-id"))?;
        if pdu.headers.content_location.is_none() {
            return Err(MmsError::MissingHeader("content-location"));
        }
        if let Some(existing) = self.get(&tid) {
            return Ok(existing);
        }
        let mut tx = MmsTransaction::new(tid.clone(), Direction::Receive);
        tx.notification = Some(pdu.headers.clone());
        self.insert(tx);
        self.advance(&tid, TxState::Notified)?;

        let expired = match pdu.headers.expiry {
            Some(Expiry::Absolute(t)) => t <= Utc::now().timestamp().max(0) as u64,
            Some(Expiry::Relative(0)) => true,
            _ => false,
        };
        if expired {
            self.fail(&tid, "expired");
            return self.snapshot(&tid);
        }

        let mut h = MmsHeaders::new();
        h.transaction_id = Some(tid.clone());
        h.status = Some(self.cfg.notify_status);
        let resp = pdu::encode(&MmsPdu::new(MessageType::NotifyRespInd, h))?;
        if let Err(e) = self.client.post(&self.cfg.mmsc_url, resp).await {
            self.fail(&tid, e.to_string());
            return self.snapshot(&tid);
        }
        self.advance(&tid, TxState::NotifyRespSent)?;
        if self.cfg.auto_retrieve {
            let me = Arc::clone(self);
            let tid2 = tid.clone();
            tokio::spawn(async move {
                if let Err(e) = me.retrieve(&tid2).await {
                    warn!(tid = tid2, "retrieval: {e}");
                }
            });
        }
        self.snapshot(&tid)
    }

    /// Fetches the message for a notified transaction and acknowledges it.
    pub async fn retrieve(&self, tid: &str) -> Result<MmsTransaction, MmsError> {
        let location = self.update(tid, |tx| {
            if !matches!(tx.state, TxState::Notified | TxState::NotifyRespSent) {
                return Err(MmsError::InvalidState {
                    id: tx.transaction_id.clone(),
                    state: tx.state,
                    action: "retrieve",
                });
            }
            tx.go(TxState::Retrieving)?;
            Ok(tx
                .notification
                .as_ref()
                .and_then(|n| n.content_location.clone())
                .unwrap_or_default())
        })??;
        let body = match self.client.get(&location).await {
            Ok(b) => b,
            Err(MmsError::ContentLocationGone) => {
                self.fail(tid, "content-location-gone");
                return self.snapshot(tid);
            }
            Err(e) => {
                self.fail(tid, e.to_string());
                return self.snapshot(tid);
            }
        };
        let conf = match pdu::decode(&body) {
            Ok(c) if c.message_type == MessageType::RetrieveConf => c,
            Ok(c) => {
                self.fail(tid, format!("unexpected {:?}", c.message_type));
                return self.snapshot(tid);
            }
            Err(e) => {
                self.fail(tid, e.to_string());
                return self.snapshot(tid);
            }
        };
        let ack_wanted = conf.headers.delivery_report != Some(false);
        let message_id = conf.headers.message_id.clone();
        self.update(tid, |tx| {
            tx.message = Some(conf.clone());
            tx.message_id = message_id;
            tx.go(TxState::Retrieved)
        })??;
        let _ = self.events.send(MmsEvent::Received {
            transaction_id: tid.to_owned(),
            message: Box::new(conf),
        });
        info!(tid, "MMS retrieved");
        if ack_wanted {
            let mut h = MmsHeaders::new();
            h.transaction_id = Some(tid.to_owned());
            h.report_allowed = Some(true);
            let ack = pdu::encode(&MmsPdu::new(MessageType::AcknowledgeInd, h))?;
            match self.client.post(&self.cfg.mmsc_url, ack).await {
                Ok(_) => self.advance(tid, TxState::Acknowledged)?,
                Err(e) => warn!(tid, "acknowledge-ind not delivered: {e}"),
            }
        }
        self.snapshot(tid)
    }

    pub fn handle_delivery_ind(&self, bytes: &[u8]) -> Result<DeliveryReport, MmsError> {
        let pdu = pdu::decode(bytes)?;
        if pdu.message_type != MessageType::DeliveryInd {
            return Err(MmsError::UnexpectedType {
                expected: MessageType::DeliveryInd,
                got: pdu.message_type,
            });
        }
        let message_id = pdu
            .headers
            .message_id
            .clone()
            .ok_or(MmsError::MissingHeader("message-id"))?;
        let status = pdu
            .headers
            .status
            .ok_or(MmsError::MissingHeader("status"))?;
        let tid = self.by_message_id.lock().unwrap().get(&message_id).cloned();
        let report = DeliveryReport {
            message_id,
            status,
            recipient: pdu.headers.to.first().cloned(),
            date: pdu.headers.date,
            transaction_id: tid.clone(),
        };
        if let Some(tid) = tid {
            let r = report.clone();
            let _ = self.update(&tid, |tx| tx.delivery_reports.push(r));
        }
        let _ = self.events.send(MmsEvent::DeliveryReport(report.clone()));
        Ok(report)
    }
}
