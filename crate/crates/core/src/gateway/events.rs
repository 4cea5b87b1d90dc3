//! Gateway event log: a bounded ring for resume plus broadcast fan-out.

use std::collections::VecDeque;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    IncomingCall,
    CallState,
    SmsReceived,
    MmsNotification,
    MmsDelivery,
    ModemStatus,
    ServiceAlert,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::IncomingCall => "incoming_call",
            EventKind::CallState => "call_state",
            EventKind::SmsReceived => "sms_received",
            EventKind::MmsNotification => "mms_notification",
            EventKind::MmsDelivery => "mms_delivery",
            EventKind::ModemStatus => "modem_status",
            EventKind::ServiceAlert => "service_alert",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayEvent {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub kind: EventKind,
    pub payload: serde_json::Value,
}

struct Ring {
    next_seq: u64,
    events: VecDeque<GatewayEvent>,
}

pub struct EventHub {
    retention: usize,
    ring: Mutex<Ring>,
    tx: broadcast::Sender<GatewayEvent>,
}

/// Events already retained after a cursor, followed by live ones.
pub struct Subscription {
    pub backlog: Vec<GatewayEvent>,
    pub live: broadcast::Receiver<GatewayEvent>,
    /// True when events after the cursor had already been evicted.
    pub gap: bool,
}

impl EventHub {
    pub fn new(retention: usize) -> Self {
        let (tx, _) = broadcast::channel(retention.max(16));
        EventHub {
            retention: retention.max(1),
            ring: Mutex::new(Ring {
                next_seq: 1,
                events: VecDeque::new(),
            }),
            tx,
        }
    }

    pub fn publish(&self, kind: EventKind, payload: serde_json::Value) -> GatewayEvent {
        let mut ring = self.ring.lock().unwrap();
        let ev = GatewayEvent {
            seq: ring.next_seq,
            at: Utc::now(),
            kind,
            payload,
        };
        ring.next_seq += 1;
        if ring.events.len() == self.retention {
            ring.events.pop_front();
        }
        ring.events.push_back(ev.clone());
        // Sent under the lock so subscribers see seq order.
        let _ = self.tx.send(ev.clone());
        ev
    }

    /// Subscribes, replaying retained events with seq > `after`.
    pub fn subscribe_from(&self, after: Option<u64>) -> Subscription {
        let ring = self.ring.lock().unwrap();
        let live = self.tx.subscribe();
        let (backlog, gap) = match after {
            None => (Vec::new(), false),
            Some(after) => {
                let backlog: Vec<_> = ring
                    .events
                    .iter()
                    .filter(|e| e.seq > after)
                    .cloned()
                    .collect();
                let oldest = ring.events.front().map(|e| e.seq).unwrap_or(ring.next_seq);
                (backlog, after + 1 < oldest)
            }
        };
        Subscription { backlog, live, gap }
    }

    /// Retained events with seq > `after`.
    pub fn since(&self, after: u64) -> Vec<GatewayEvent> {
        let ring = self.ring.lock().unwrap();
        ring.events
            .iter()
            .filter(|e| e.seq > after)
            .cloned()
            .collect()
    }

    pub fn last_seq(&self) -> u64 {
        self.ring.lock().unwrap().next_seq - 1
    }
}
