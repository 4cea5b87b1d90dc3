//! MMS: binary PDU codec, MMSC HTTP client and transaction tracking.

pub mod client;
pub mod pdu;
pub mod transaction;
pub mod wsp;

use thiserror::Error;

pub use client::MmsClient;
pub use pdu::{
    decode, encode, Expiry, From, MessageClass, MessageType, MmsBody, MmsHeaders, MmsPart, MmsPdu,
    MmsStatus, ResponseStatus,
};
pub use transaction::{
    DeliveryReport, Direction, MmsConfig, MmsEvent, MmsManager, MmsTransaction, SendRequest,
    TxState,
};

pub const CONTENT_TYPE: &str = "application/vnd.wap.mms-message";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MmsError {
    #[error("truncated PDU")]
    Truncated,
    #[error("unknown message type 0x{0:02X}")]
    UnknownMessageType(u8),
    #[error("missing mandatory header {0}")]
    MissingHeader(&'static str),
    #[error("malformed PDU: {0}")]
    Malformed(String),
    #[error("expected {expected:?}, got {got:?}")]
    UnexpectedType {
        expected: MessageType,
        got: MessageType,
    },
    #[error("HTTP: {0}")]
    Http(String),
    #[error("content location gone")]
    ContentLocationGone,
    #[error("unknown transaction {0}")]
    UnknownTransaction(String),
    #[error("transaction {id} is {state:?}, cannot {action}")]
    InvalidState {
        id: String,
        state: TxState,
        action: &'static str,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}
