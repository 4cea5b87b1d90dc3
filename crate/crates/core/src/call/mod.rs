//! Voice calls: session state machine, G.711/RTP audio bridge.

pub mod bridge;
pub mod g711;
pub mod jitter;
pub mod manager;
pub mod rtp;
pub mod session;

use thiserror::Error;

pub use manager::{AudioTap, CallConfig, CallEvent, CallManager};
pub use rtp::{RtpPacket, RtpSender, RtpStats};
pub use session::{CallDirection, CallSession, CallState, Cause, IncomingInfo, RtpEndpoint};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CallError {
    #[error("call {id} is {state}")]
    InvalidState { id: String, state: &'static str },
    #[error("unknown call {0}")]
    NotFound(String),
    #[error("another call is in progress")]
    Busy,
    #[error("invalid number {0:?}")]
    InvalidNumber(String),
    #[error("modem: {0}")]
    Modem(String),
    #[error("audio: {0}")]
    Audio(String),
    #[error("no audio bridge for this call")]
    AudioUnavailable,
    #[error("audio relay already attached")]
    AudioInUse,
}
