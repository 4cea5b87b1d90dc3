//! MMS PDU headers and multipart bodies (encapsulation 1.2).

use serde::{Deserialize, Serialize};

use super::wsp::{self, Reader, Writer};
use super::MmsError;

pub mod field {
    pub const BCC: u8 = 0x01;
    pub const CC: u8 = 0x02;
    pub const CONTENT_LOCATION: u8 = 0x03;
    pub const CONTENT_TYPE: u8 = 0x04;
    pub const DATE: u8 = 0x05;
    pub const DELIVERY_REPORT: u8 = 0x06;
    pub const EXPIRY: u8 = 0x08;
    pub const FROM: u8 = 0x09;
    pub const MESSAGE_CLASS: u8 = 0x0A;
    pub const MESSAGE_ID: u8 = 0x0B;
    pub const MESSAGE_TYPE: u8 = 0x0C;
    pub const VERSION: u8 = 0x0D;
    pub const MESSAGE_SIZE: u8 = 0x0E;
    pub const PRIORITY: u8 = 0x0F;
    pub const READ_REPORT: u8 = 0x10;
    pub const REPORT_ALLOWED: u8 = 0x11;
    pub const RESPONSE_STATUS: u8 = 0x12;
    pub const RESPONSE_TEXT: u8 = 0x13;
    pub const STATUS: u8 = 0x15;
    pub const SUBJECT: u8 = 0x16;
    pub const TO: u8 = 0x17;
    pub const TRANSACTION_ID: u8 = 0x18;
}

const PART_CONTENT_ID: u8 = 0x40;
const PART_CONTENT_LOCATION: u8 = 0x0E;

const YES: u8 = 0x80;
const NO: u8 = 0x81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    SendReq,
    SendConf,
    NotificationInd,
    NotifyRespInd,
    RetrieveConf,
    AcknowledgeInd,
    DeliveryInd,
}

impl MessageType {
    pub const ALL: [MessageType; 7] = [
        MessageType::SendReq,
        MessageType::SendConf,
        MessageType::NotificationInd,
        MessageType::NotifyRespInd,
        MessageType::RetrieveConf,
        MessageType::AcknowledgeInd,
        MessageType::DeliveryInd,
    ];

    pub fn octet(self) -> u8 {
        0x80 + self as u8
    }

    pub fn from_octet(b: u8) -> Option<Self> {
        Self::ALL.get(b.checked_sub(0x80)? as usize).copied()
    }

    pub fn has_body(self) -> bool {
        matches!(self, MessageType::SendReq | MessageType::RetrieveConf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageClass {
    Personal,
    Advertisement,
    Informational,
    Auto,
}

impl MessageClass {
    fn octet(self) -> u8 {
        0x80 + self as u8
    }

    fn from_octet(b: u8) -> Option<Self> {
        use MessageClass::*;
        [Personal, Advertisement, Informational, Auto]
            .get(b.checked_sub(0x80)? as usize)
            .copied()
    }

    fn from_token(s: &str) -> Option<Self> {
        use MessageClass::*;
        Some(match s.to_ascii_lowercase().as_str() {
            "personal" => Personal,
            "advertisement" => Advertisement,
            "informational" => Informational,
            "auto" => Auto,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    Low,
    Normal,
    High,
}

/// X-Mms-Status values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmsStatus {
    Expired,
    Retrieved,
    Rejected,
    Deferred,
    Unrecognised,
    Indeterminate,
    Forwarded,
    Unreachable,
}

impl MmsStatus {
    pub const ALL: [MmsStatus; 8] = [
        MmsStatus::Expired,
        MmsStatus::Retrieved,
        MmsStatus::Rejected,
        MmsStatus::Deferred,
        MmsStatus::Unrecognised,
        MmsStatus::Indeterminate,
        MmsStatus::Forwarded,
        MmsStatus::Unreachable,
    ];

    pub fn octet(self) -> u8 {
        0x80 + self as u8
    }

    pub fn from_octet(b: u8) -> Option<Self> {
        Self::ALL.get(b.checked_sub(0x80)? as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    ErrorUnspecified,
    ErrorServiceDenied,
    ErrorMessageFormatCorrupt,
    ErrorSendingAddressUnresolved,
    ErrorMessageNotFound,
    ErrorNetworkProblem,
    ErrorContentNotAccepted,
    ErrorUnsupportedMessage,
    /// Any other code, kept verbatim.
    Other(u8),
}

impl ResponseStatus {
    pub fn octet(self) -> u8 {
        use ResponseStatus::*;
        match self {
            Ok => 0x80,
            ErrorUnspecified => 0x81,
            ErrorServiceDenied => 0x82,
            ErrorMessageFormatCorrupt => 0x83,
            ErrorSendingAddressUnresolved => 0x84,
            ErrorMessageNotFound => 0x85,
            ErrorNetworkProblem => 0x86,
            ErrorContentNotAccepted => 0x87,
            ErrorUnsupportedMessage => 0x88,
            Other(b) => b,
        }
    }

    pub fn from_octet(b: u8) -> Self {
        use ResponseStatus::*;
        match b {
            0x80 => Ok,
            0x81 => ErrorUnspecified,
            0x82 => ErrorServiceDenied,
            0x83 => ErrorMessageFormatCorrupt,
            0x84 => ErrorSendingAddressUnresolved,
            0x85 => ErrorMessageNotFound,
            0x86 => ErrorNetworkProblem,
            0x87 => ErrorContentNotAccepted,
            0x88 => ErrorUnsupportedMessage,
            b => Other(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum From {
    Address(String),
    /// Ask the MMSC to insert the sender address.
    InsertToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expiry {
    /// Seconds since the Unix epoch.
    Absolute(u64),
    /// Seconds from receipt.
    Relative(u64),
}

/// A header this codec does not interpret, kept as raw value bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnknownHeader {
    /// Well-known field code (without the high bit), or `None` for an
    /// application header named by `name`.
    pub code: Option<u8>,
    pub name: Option<String>,
    #[serde(with = "hex_bytes")]
    pub value: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MmsHeaders {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transaction_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_id: Option<String>,
    /// Encoded as major << 4 | minor; 0x12 is 1.2.
    pub version: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<From>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub to: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cc: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bcc: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_class: Option<MessageClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<Priority>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expiry: Option<Expiry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_size: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivery_report: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read_report: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_allowed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<MmsStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_status: Option<ResponseStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown: Vec<UnknownHeader>,
}

impl MmsHeaders {
    pub fn new() -> Self {
        MmsHeaders {
            version: 0x12,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MmsPart {
    pub content_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_location: Option<String>,
    #[serde(with = "base64_bytes")]
    pub data: Vec<u8>,
}

/// Message body. For a non-multipart content type the body has exactly one
/// part carrying the same content type and no part headers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MmsBody {
    pub content_type: String,
    pub parts: Vec<MmsPart>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MmsPdu {
    pub message_type: MessageType,
    pub headers: MmsHeaders,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<MmsBody>,
}

impl MmsPdu {
    pub fn new(message_type: MessageType, headers: MmsHeaders) -> Self {
        MmsPdu {
            message_type,
            headers,
            body: None,
        }
    }

    /// Checks the headers mandatory for this message type.
    pub fn validate(&self) -> Result<(), MmsError> {
        let h = &self.headers;
        let need = |present: bool, name: &'static str| {
            if present {
                Ok(())
            } else {
                Err(MmsError::MissingHeader(name))
            }
        };
        use MessageType::*;
        if !matches!(self.message_type, DeliveryInd) {
            need(h.transaction_id.is_some(), "transaction-id")?;
        }
        match self.message_type {
            SendReq => {
                need(h.from.is_some(), "from")?;
                need(
                    !(h.to.is_empty() && h.cc.is_empty() && h.bcc.is_empty()),
                    "to",
                )?;
                need(self.body.is_some(), "content-type")?;
            }
            SendConf => need(h.response_status.is_some(), "response-status")?,
            NotificationInd => {
                need(h.message_class.is_some(), "message-class")?;
                need(h.message_size.is_some(), "message-size")?;
                need(h.expiry.is_some(), "expiry")?;
                need(h.content_location.is_some(), "content-location")?;
            }
            NotifyRespInd => need(h.status.is_some(), "status")?,
            RetrieveConf => {
                need(h.date.is_some(), "date")?;
                need(self.body.is_some(), "content-type")?;
            }
            AcknowledgeInd => {}
            DeliveryInd => {
                need(h.message_id.is_some(), "message-id")?;
                need(!h.to.is_empty(), "to")?;
                need(h.date.is_some(), "date")?;
                need(h.status.is_some(), "status")?;
            }
        }
        if let Some(body) = &self.body {
            if !self.message_type.has_body() {
                return Err(MmsError::Malformed(format!(
                    "{:?} carries no body",
                    self.message_type
                )));
            }
            if !wsp::is_multipart(&body.content_type) {
                let single = body.parts.len() == 1
                    && body.parts[0].content_type == body.content_type
                    && body.parts[0].content_id.is_none()
                    && body.parts[0].content_location.is_none();
                if !single {
                    return Err(MmsError::Malformed(
                        "non-multipart body must have exactly one bare part".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn header(w: &mut Writer, code: u8) {
    w.byte(0x80 | code);
}

fn bool_octet(v: bool) -> u8 {
    if v {
        YES
    } else {
        NO
    }
}

pub fn encode(pdu: &MmsPdu) -> Result<Vec<u8>, MmsError> {
    pdu.validate()?;
    let h = &pdu.headers;
    let mut w = Writer::new();
    header(&mut w, field::MESSAGE_TYPE);
    w.byte(pdu.message_type.octet());
    if let Some(t) = &h.transaction_id {
        header(&mut w, field::TRANSACTION_ID);
        w.text(t);
    }
    header(&mut w, field::VERSION);
    w.short_integer(h.version & 0x7F);
    if let Some(v) = &h.message_id {
        header(&mut w, field::MESSAGE_ID);
        w.text(v);
    }
    if let Some(v) = h.date {
        header(&mut w, field::DATE);
        w.long_integer(v);
    }
    if let Some(from) = &h.from {
        header(&mut w, field::FROM);
        let mut inner = Writer::new();
        match from {
            From::Address(a) => {
                inner.byte(0x80);
                inner.encoded_string(a);
            }
            From::InsertToken => inner.byte(0x81),
        }
        w.value_length(inner.buf.len());
        w.bytes(&inner.buf);
    }
    for (code, list) in [(field::TO, &h.to), (field::CC, &h.cc), (field::BCC, &h.bcc)] {
        for a in list {
            header(&mut w, code);
            w.encoded_string(a);
        }
    }
    if let Some(v) = &h.subject {
        header(&mut w, field::SUBJECT);
        w.encoded_string(v);
    }
    if let Some(v) = h.message_class {
        header(&mut w, field::MESSAGE_CLASS);
        w.byte(v.octet());
    }
    if let Some(v) = h.priority {
        header(&mut w, field::PRIORITY);
        w.byte(0x80 + v as u8);
    }
    if let Some(v) = h.expiry {
        header(&mut w, field::EXPIRY);
        let mut inner = Writer::new();
        match v {
            Expiry::Absolute(t) => {
                inner.byte(0x80);
                inner.long_integer(t);
            }
            Expiry::Relative(s) => {
                inner.byte(0x81);
                inner.long_integer(s);
            }
        }
        w.value_length(inner.buf.len());
        w.bytes(&inner.buf);
    }
    if let Some(v) = h.message_size {
        header(&mut w, field::MESSAGE_SIZE);
        w.long_integer(v);
    }
    if let Some(v) = &h.content_location {
        header(&mut w, field::CONTENT_LOCATION);
        w.text(v);
    }
    for (code, v) in [
        (field::DELIVERY_REPORT, h.delivery_report),
        (field::READ_REPORT, h.read_report),
        (field::REPORT_ALLOWED, h.report_allowed),
    ] {
        if let Some(v) = v {
            header(&mut w, code);
            w.byte(bool_octet(v));
        }
    }
    if let Some(v) = h.status {
        header(&mut w, field::STATUS);
        w.byte(v.octet());
    }
    if let Some(v) = h.response_status {
        header(&mut w, field::RESPONSE_STATUS);
        w.byte(v.octet());
    }
    if let Some(v) = &h.response_text {
        header(&mut w, field::RESPONSE_TEXT);
        w.encoded_string(v);
    }
    for u in &h.unknown {
        match (u.code, &u.name) {
            (Some(code), _) => header(&mut w, code),
            (None, Some(name)) => w.text(name),
            (None, None) => return Err(MmsError::Malformed("unknown header without name".into())),
        }
        w.bytes(&u.value);
    }
    if let Some(body) = &pdu.body {
        header(&mut w, field::CONTENT_TYPE);
        w.content_type(&body.content_type);
        encode_body(&mut w, body);
    }
    Ok(w.buf)
}

fn encode_body(w: &mut Writer, body: &MmsBody) {
    if !wsp::is_multipart(&body.content_type) {
        w.bytes(&body.parts[0].data);
        return;
    }
    w.uintvar(body.parts.len() as u64);
    for part in &body.parts {
        let mut hw = Writer::new();
        hw.content_type(&part.content_type);
        if let Some(id) = &part.content_id {
            hw.short_integer(PART_CONTENT_ID);
            hw.quoted_string(id);
        }
        if let Some(loc) = &part.content_location {
            hw.short_integer(PART_CONTENT_LOCATION);
            hw.text(loc);
        }
        w.uintvar(hw.buf.len() as u64);
        w.uintvar(part.data.len() as u64);
        w.bytes(&hw.buf);
        w.bytes(&part.data);
    }
}

fn bool_value(r: &mut Reader) -> Result<bool, MmsError> {
    match r.byte()? {
        YES => Ok(true),
        NO => Ok(false),
        b => Err(MmsError::Malformed(format!(
            "expected yes/no, got 0x{b:02X}"
        ))),
    }
}

pub fn decode(buf: &[u8]) -> Result<MmsPdu, MmsError> {
    let mut r = Reader::new(buf);
    let first = r.byte()?;
    if first != 0x80 | field::MESSAGE_TYPE {
        return Err(MmsError::UnknownMessageType(first));
    }
    let t = r.byte()?;
    let message_type = MessageType::from_octet(t).ok_or(MmsError::UnknownMessageType(t))?;
    let mut h = MmsHeaders::new();
    let mut body = None;
    while !r.is_empty() {
        let b = r.byte()?;
        if b & 0x80 == 0 {
            // application header: token-text name, text value
            let mut name = vec![b];
            loop {
                match r.byte()? {
                    0 => break,
                    c => name.push(c),
                }
            }
            let value = r.any_value()?.to_vec();
            h.unknown.push(UnknownHeader {
                code: None,
                name: Some(String::from_utf8_lossy(&name).into_owned()),
                value,
            });
            continue;
        }
        let code = b & 0x7F;
        match code {
            field::TRANSACTION_ID => h.transaction_id = Some(r.text()?),
            field::VERSION => h.version = r.short_integer()?,
            field::MESSAGE_ID => h.message_id = Some(r.text()?),
            field::DATE => h.date = Some(r.long_integer()?),
            field::FROM => {
                let len = r.value_length()?;
                let mut inner = Reader::new(r.take(len)?);
                h.from = Some(match inner.byte()? {
                    0x80 => From::Address(inner.encoded_string()?),
                    0x81 => From::InsertToken,
                    b => return Err(MmsError::Malformed(format!("from token 0x{b:02X}"))),
                });
            }
            field::TO => h.to.push(r.encoded_string()?),
            field::CC => h.cc.push(r.encoded_string()?),
            field::BCC => h.bcc.push(r.encoded_string()?),
            field::SUBJECT => h.subject = Some(r.encoded_string()?),
            field::MESSAGE_CLASS => {
                h.message_class = Some(if r.peek()? & 0x80 != 0 {
                    let b = r.byte()?;
                    MessageClass::from_octet(b)
                        .ok_or_else(|| MmsError::Malformed(format!("message class 0x{b:02X}")))?
                } else {
                    let s = r.text()?;
                    MessageClass::from_token(&s)
                        .ok_or_else(|| MmsError::Malformed(format!("message class {s:?}")))?
                })
            }
            field::PRIORITY => {
                h.priority = Some(match r.byte()? {
                    0x80 => Priority::Low,
                    0x81 => Priority::Normal,
                    0x82 => Priority::High,
                    b => return Err(MmsError::Malformed(format!("priority 0x{b:02X}"))),
                })
            }
            field::EXPIRY => {
                let len = r.value_length()?;
                let mut inner = Reader::new(r.take(len)?);
                h.expiry = Some(match inner.byte()? {
                    0x80 => Expiry::Absolute(inner.long_integer()?),
                    0x81 => Expiry::Relative(inner.integer()?),
                    b => return Err(MmsError::Malformed(format!("expiry token 0x{b:02X}"))),
                });
            }
            field::MESSAGE_SIZE => h.message_size = Some(r.long_integer()?),
            field::CONTENT_LOCATION => h.content_location = Some(r.text()?),
            field::DELIVERY_REPORT => h.delivery_report = Some(bool_value(&mut r)?),
            field::READ_REPORT => h.read_report = Some(bool_value(&mut r)?),
            field::REPORT_ALLOWED => h.report_allowed = Some(bool_value(&mut r)?),
            field::STATUS => {
                let b = r.byte()?;
                h.status = Some(
                    MmsStatus::from_octet(b)
                        .ok_or_else(|| MmsError::Malformed(format!("status 0x{b:02X}")))?,
                );
            }
            field::RESPONSE_STATUS => {
                h.response_status = Some(ResponseStatus::from_octet(r.byte()?))
            }
            field::RESPONSE_TEXT => h.response_text = Some(r.encoded_string()?),
            field::CONTENT_TYPE => {
                let ct = r.content_type()?;
                body = Some(decode_body(&mut r, ct)?);
                break;
            }
            _ => {
                let value = r.any_value()?.to_vec();
                h.unknown.push(UnknownHeader {
                    code: Some(code),
                    name: None,
                    value,
                });
            }
        }
    }
    Ok(MmsPdu {
        message_type,
        headers: h,
        body,
    })
}

fn decode_body(r: &mut Reader, content_type: String) -> Result<MmsBody, MmsError> {
    if !wsp::is_multipart(&content_type) {
        let data = r.rest().to_vec();
        r.take(data.len())?;
        return Ok(MmsBody {
            parts: vec![MmsPart {
                content_type: content_type.clone(),
                content_id: None,
                content_location: None,
                data,
            }],
            content_type,
        });
    }
    let count = r.uintvar()? as usize;
    let mut parts = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let hlen = r.uintvar()? as usize;
        let dlen = r.uintvar()? as usize;
        let mut hr = Reader::new(r.take(hlen)?);
        let ct = hr.content_type()?;
        let mut part = MmsPart {
            content_type: ct,
            content_id: None,
            content_location: None,
            data: Vec::new(),
        };
        while !hr.is_empty() {
            let b = hr.peek()?;
            if b & 0x80 != 0 {
                match hr.short_integer()? {
                    PART_CONTENT_ID => part.content_id = Some(hr.quoted_string()?),
                    PART_CONTENT_LOCATION => part.content_location = Some(hr.text()?),
                    _ => {
                        hr.any_value()?;
                    }
                }
            } else {
                hr.text()?;
                hr.any_value()?;
            }
        }
        part.data = r.take(dlen)?.to_vec();
        parts.push(part);
    }
    Ok(MmsBody {
        content_type,
        parts,
    })
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

mod base64_bytes {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        base64::engine::general_purpose::STANDARD
            .decode(String::deserialize(d)?)
            .map_err(serde::de::Error::custom)
    }
}
