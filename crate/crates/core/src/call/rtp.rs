//! RTP fixed header framing.

use serde::{Deserialize, Serialize};

pub const HEADER_LEN: usize = 12;
pub const PT_PCMU: u8 = 0;
pub const SAMPLES_PER_FRAME: usize = 160;
pub const FRAME_BYTES: usize = SAMPLES_PER_FRAME * 2;
pub const CLOCK_RATE: u32 = 8000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtpPacket {
    pub payload_type: u8,
    pub marker: bool,
    pub seq: u16,
    pub timestamp: u32,
    pub ssrc: u32,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RtpError {
    #[error("packet shorter than its header")]
    Truncated,
    #[error("unsupported RTP version {0}")]
    Version(u8),
}

impl RtpPacket {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(0x80);
        out.push(((self.marker as u8) << 7) | (self.payload_type & 0x7F));
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out.extend_from_slice(&self.ssrc.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn parse(buf: &[u8]) -> Result<Self, RtpError> {
        if buf.len() < HEADER_LEN {
            return Err(RtpError::Truncated);
        }
        let version = buf[0] >> 6;
        if version != 2 {
            return Err(RtpError::Version(version));
        }
        let padding = buf[0] & 0x20 != 0;
        let extension = buf[0] & 0x10 != 0;
        let csrc = (buf[0] & 0x0F) as usize;
        let mut start = HEADER_LEN + 4 * csrc;
        if extension {
            let ext = buf.get(start..start + 4).ok_or(RtpError::Truncated)?;
            start += 4 + 4 * u16::from_be_bytes([ext[2], ext[3]]) as usize;
        }
        let mut end = buf.len();
        if padding {
            let pad = *buf.last().ok_or(RtpError::Truncated)? as usize;
            end = end.checked_sub(pad).ok_or(RtpError::Truncated)?;
        }
        if start > end {
            return Err(RtpError::Truncated);
        }
        Ok(RtpPacket {
            payload_type: buf[1] & 0x7F,
            marker: buf[1] & 0x80 != 0,
            seq: u16::from_be_bytes([buf[2], buf[3]]),
            timestamp: u32::from_be_bytes([buf[4], buf[5], buf[6], buf[7]]),
            ssrc: u32::from_be_bytes([buf[8], buf[9], buf[10], buf[11]]),
            payload: buf[start..end].to_vec(),
        })
    }
}

/// Produces consecutive PCMU packets for one stream.
#[derive(Debug, Clone)]
pub struct RtpSender {
    pub ssrc: u32,
    seq: u16,
    timestamp: u32,
    sent: u64,
}

impl RtpSender {
    pub fn new(ssrc: u32, seq: u16, timestamp: u32) -> Self {
        RtpSender {
            ssrc,
            seq,
            timestamp,
            sent: 0,
        }
    }

    pub fn random() -> Self {
        use rand::Rng;
        let mut rng = rand::thread_rng();
        Self::new(rng.gen(), rng.gen(), rng.gen())
    }

    /// Wraps one 20 ms µ-law frame.
    pub fn packet(&mut self, payload: Vec<u8>) -> RtpPacket {
        let p = RtpPacket {
            payload_type: PT_PCMU,
            marker: self.sent == 0,
            seq: self.seq,
            timestamp: self.timestamp,
            ssrc: self.ssrc,
            payload,
        };
        self.seq = self.seq.wrapping_add(1);
        self.timestamp = self.timestamp.wrapping_add(SAMPLES_PER_FRAME as u32);
        self.sent += 1;
        p
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtpStats {
    pub packets_sent: u64,
    pub packets_received: u64,
    pub packets_late: u64,
    pub frames_concealed: u64,
}

pub fn pcm_from_le(bytes: &[u8]) -> Vec<i16> {
    bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect()
}

pub fn pcm_to_le(samples: &[i16]) -> Vec<u8> {
    samples.iter().flat_map(|s| s.to_le_bytes()).collect()
}
