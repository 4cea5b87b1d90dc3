use std::net::SocketAddr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::rtp::RtpStats;
use super::CallError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cause {
    LocalHangup,
    RemoteHangup,
    Rejected,
    Busy,
    NoAnswer,
    NoCarrier,
    UnsupportedBearer,
    AudioLost,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "state", content = "cause", rename_all = "snake_case")]
pub enum CallState {
    Idle,
    Dialing,
    Ringing,
    Active,
    Terminated(Cause),
}

impl CallState {
    pub fn can_go(self, to: CallState) -> bool {
        use CallState::*;
        matches!(
            (self, to),
            (Idle, Dialing) | (Idle, Ringing) | (Dialing, Active) | (Ringing, Active)
        ) || (matches!(self, Dialing | Ringing | Active) && matches!(to, Terminated(_)))
    }

    pub fn is_terminated(self) -> bool {
        matches!(self, CallState::Terminated(_))
    }

    pub fn name(self) -> &'static str {
        match self {
            CallState::Idle => "idle",
            CallState::Dialing => "dialing",
            CallState::Ringing => "ringing",
            CallState::Active => "active",
            CallState::Terminated(_) => "terminated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallDirection {
    Outgoing,
    Incoming,
}

/// Optional parameters of `+CRING: VOICE[,<priority>[,<subaddr>,<satype>]]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncomingInfo {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priority: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subaddr: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub satype: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtpEndpoint {
    pub local: SocketAddr,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remote: Option<SocketAddr>,
    pub payload_type: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssrc: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallSession {
    pub id: String,
    pub direction: CallDirection,
    /// Remote party; unknown until +CLIP for incoming calls.
    pub peer: Option<String>,
    #[serde(flatten)]
    pub state: CallState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtp: Option<RtpEndpoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub incoming_info: Option<IncomingInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtp_stats: Option<RtpStats>,
    pub created_at: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answered_at: Option<DateTime<Utc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ended_at: Option<DateTime<Utc>>,
}

impl CallSession {
    pub fn new(id: String, direction: CallDirection, peer: Option<String>) -> Self {
        CallSession {
            id,
            direction,
            peer,
            state: CallState::Idle,
            rtp: None,
            incoming_info: None,
            rtp_stats: None,
            created_at: Utc::now(),
            answered_at: None,
            ended_at: None,
        }
    }

    pub fn transition(&mut self, to: CallState) -> Result<(), CallError> {
        if !self.state.can_go(to) {
            return Err(CallError::InvalidState {
                id: self.id.clone(),
                state: self.state.name(),
            });
        }
        self.state = to;
        match to {
            CallState::Active => self.answered_at = Some(Utc::now()),
            CallState::Terminated(_) => self.ended_at = Some(Utc::now()),
            _ => {}
        }
        Ok(())
    }
}

/// Parses the payload of `+CRING:` into the bearer type and voice options.
pub fn parse_cring(payload: &str) -> (String, IncomingInfo) {
    let mut fields = payload.split(',').map(|f| f.trim().trim_matches('"'));
    let kind = fields.next().unwrap_or("").to_ascii_uppercase();
    let info = IncomingInfo {
        priority: fields.next().and_then(|f| f.parse().ok()),
        subaddr: fields.next().filter(|s| !s.is_empty()).map(str::to_owned),
        satype: fields.next().and_then(|f| f.parse().ok()),
    };
    (kind, info)
}

/// Number from a `+CLIP: "<number>",<type>` payload.
pub fn parse_clip(payload: &str) -> Option<String> {
    let first = payload.split(',').next()?.trim().trim_matches('"');
    (!first.is_empty()).then(|| first.to_owned())
}
