use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ModemServices, Service, ServiceError, ServiceEvent};
use crate::at::{command::split_args, Arg, AtCommand};
use crate::sms::{self, SmsPdu};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageStatus {
    ReceivedUnread,
    ReceivedRead,
    StoredUnsent,
    StoredSent,
}

impl MessageStatus {
    pub fn from_code(code: i64) -> Option<Self> {
        use MessageStatus::*;
        Some(match code {
            0 => ReceivedUnread,
            1 => ReceivedRead,
            2 => StoredUnsent,
            3 => StoredSent,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// `<stat>` filter of +CMGL in PDU mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageFilter {
    Unread,
    Read,
    Unsent,
    Sent,
    All,
}

impl MessageFilter {
    pub fn code(self) -> i64 {
        match self {
            MessageFilter::Unread => 0,
            MessageFilter::Read => 1,
            MessageFilter::Unsent => 2,
            MessageFilter::Sent => 3,
            MessageFilter::All => 4,
        }
    }
}

impl std::str::FromStr for MessageFilter {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "unread" => MessageFilter::Unread,
            "read" => MessageFilter::Read,
            "unsent" => MessageFilter::Unsent,
            "sent" => MessageFilter::Sent,
            "all" | "inbox" => MessageFilter::All,
            _ => {
                return Err(ServiceError::InvalidArgument(format!(
                    "unknown filter {s:?}"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredSms {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub storage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<u32>,
    pub status: MessageStatus,
    pub pdu: SmsPdu,
}

impl StoredSms {
    pub fn text(&self) -> Option<&str> {
        match &self.pdu {
            SmsPdu::Deliver(d) => d.user_data.as_text(),
            SmsPdu::Submit(s) => s.user_data.as_text(),
        }
    }
}

/// A complete incoming message, reassembled when it arrived in parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReceivedSms {
    pub from: String,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<sms::ServiceCentreTime>,
    pub storage: Option<String>,
    /// Store indices of every part.
    pub indices: Vec<u32>,
    pub parts: usize,
}

pub(crate) struct PartialMessage {
    total: u8,
    parts: Vec<Option<(String, Option<u32>)>>,
    first_seen: Instant,
    timestamp: Option<sms::ServiceCentreTime>,
    storage: Option<String>,
}

/// Parts of a concatenated message older than this are dropped.
const CONCAT_TIMEOUT: Duration = Duration::from_secs(600);

/// Parses `"SM",3` from +CMTI.
pub fn parse_cmti(payload: &str) -> Option<(String, u32)> {
    let (mem, idx) = payload.split_once(',')?;
    Some((
        mem.trim().trim_matches('"').to_owned(),
        idx.trim().parse().ok()?,
    ))
}

fn header_fields(values: &str) -> Vec<Arg> {
    split_args(values).unwrap_or_default()
}

fn arg_int(a: Option<&Arg>) -> Option<i64> {
    match a {
        Some(Arg::Int(v)) => Some(*v),
        _ => None,
    }
}

impl ModemServices {
    async fn select_storage(&self, storage: &str) -> Result<(), ServiceError> {
        let mem = storage.to_ascii_uppercase();
        if !matches!(mem.as_str(), "SM" | "ME" | "MT" | "SR" | "BM") {
            return Err(ServiceError::InvalidArgument(format!(
                "unknown storage {storage:?}"
            )));
        }
        self.cmd(AtCommand::set("+CPMS", [mem.as_str()])).await?;
        Ok(())
    }

    pub async fn fetch_message(
        &self,
        storage: &str,
        index: u32,
    ) -> Result<StoredSms, ServiceError> {
        self.require(Service::Sms)?;
        self.select_storage(storage).await?;
        let r = self.cmd(AtCommand::set("+CMGR", [index])).await?;
        let pos = r
            .info
            .iter()
            .position(|l| l.prefix == "+CMGR")
            .ok_or(ServiceError::InvalidIndex)?;
        let header = header_fields(&r.info[pos].raw_values);
        let pdu_line = r.info.get(pos + 1).ok_or(ServiceError::InvalidIndex)?;
        let status = arg_int(header.first())
            .and_then(MessageStatus::from_code)
            .unwrap_or(MessageStatus::ReceivedRead);
        Ok(StoredSms {
            storage: Some(storage.to_ascii_uppercase()),
            index: Some(index),
            status,
            pdu: sms::decode(pdu_line.line.trim())?,
        })
    }

    pub async fn list_messages(
        &self,
        storage: &str,
        filter: MessageFilter,
    ) -> Result<Vec<StoredSms>, ServiceError> {
        self.require(Service::Sms)?;
        self.select_storage(storage).await?;
        let r = self.cmd(AtCommand::set("+CMGL", [filter.code()])).await?;
        let mut out = Vec::new();
        let mut lines = r.info.iter().peekable();
        while let Some(line) = lines.next() {
            if line.prefix != "+CMGL" {
                continue;
            }
            let header = header_fields(&line.raw_values);
            let Some(pdu_line) = lines.next_if(|l| l.prefix.is_empty()) else {
                continue;
            };
            let Ok(pdu) = sms::decode(pdu_line.line.trim()) else {
                tracing::warn!("skipping undecodable stored PDU {}", pdu_line.line);
                continue;
            };
            out.push(StoredSms {
                storage: Some(storage.to_ascii_uppercase()),
                index: arg_int(header.first()).map(|i| i as u32),
                status: arg_int(header.get(1))
                    .and_then(MessageStatus::from_code)
                    .unwrap_or(MessageStatus::ReceivedRead),
                pdu,
            });
        }
        Ok(out)
    }

    pub async fn delete_message(&self, storage: &str, index: u32) -> Result<(), ServiceError> {
        self.require(Service::Sms)?;
        self.select_storage(storage).await?;
        self.cmd(AtCommand::set("+CMGD", [index])).await?;
        Ok(())
    }

    /// Emits `sms_received` for a single-part message, or once the last part
    /// of a concatenated message has arrived.
    pub(crate) fn deliver_received(&self, msg: StoredSms) {
        let SmsPdu::Deliver(d) = &msg.pdu else { return };
        let from = d.originator.to_string();
        let text = d.user_data.as_text().unwrap_or_default().to_owned();
        let Some(udh) = d.udh.filter(|u| u.total > 1) else {
            self.emit(ServiceEvent::SmsReceived(ReceivedSms {
                from,
                text,
                timestamp: Some(d.timestamp),
                storage: msg.storage.clone(),
                indices: msg.index.into_iter().collect(),
                parts: 1,
            }));
            return;
        };
        let key = (from.clone(), udh.reference);
        let complete = {
            let mut pending = self.pending_concat.lock().unwrap();
            pending.retain(|_, p| p.first_seen.elapsed() < CONCAT_TIMEOUT);
            let entry = pending
                .entry(key.clone())
                .or_insert_with(|| PartialMessage {
                    total: udh.total,
                    parts: vec![None; udh.total as usize],
                    first_seen: Instant::now(),
                    timestamp: Some(d.timestamp),
                    storage: msg.storage.clone(),
                });
            if entry.total != udh.total || udh.seq == 0 || udh.seq > udh.total {
                return;
            }
            entry.parts[udh.seq as usize - 1] = Some((text, msg.index));
            if entry.parts.iter().all(Option::is_some) {
                pending.remove(&key)
            } else {
                None
            }
        };
        if let Some(p) = complete {
            let parts = p.parts.len();
            let (texts, indices): (Vec<_>, Vec<_>) = p.parts.into_iter().flatten().unzip();
            self.emit(ServiceEvent::SmsReceived(ReceivedSms {
                from,
                text: texts.concat(),
                timestamp: p.timestamp,
                storage: p.storage,
                indices: indices.into_iter().flatten().collect(),
                parts,
            }));
        }
    }
}
