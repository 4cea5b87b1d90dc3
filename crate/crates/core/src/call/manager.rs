//! Owner of the single call session: turns API requests and URCs into
//! state transitions and starts/stops the audio bridge.

use std::collections::HashMap;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, Weak};

use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::net::UdpSocket;
use tokio::sync::{broadcast, mpsc};
use tracing::{info, warn};

use super::bridge::{Bridge, Frame};
use super::rtp::PT_PCMU;
use super::session::{
    parse_clip, parse_cring, CallDirection, CallSession, CallState, Cause, RtpEndpoint,
};
use super::CallError;
use crate::at::{AtCommand, AtEngine, AtError, FinalResult, Transport, Urc};

#[derive(Debug, Clone)]
pub struct CallConfig {
    /// Side channel carrying the modem's 16-bit PCM audio.
    pub modem_audio: Option<Transport>,
    pub rtp_bind: IpAddr,
}

impl Default for CallConfig {
    fn default() -> Self {
        CallConfig {
            modem_audio: None,
            rtp_bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CallEvent {
    Incoming(CallSession),
    State(CallSession),
}

struct Current {
    session: CallSession,
    socket: Option<Arc<UdpSocket>>,
    bridge: Option<Bridge>,
    ws_busy: Arc<AtomicBool>,
}

#[derive(Default)]
struct Inner {
    current: Option<Current>,
    ended: HashMap<String, CallSession>,
}

/// PCM access for one audio relay client.
pub struct AudioTap {
    pub from_modem: broadcast::Receiver<Frame>,
    pub to_modem: mpsc::Sender<Vec<i16>>,
    guard: Arc<AtomicBool>,
}

impl Drop for AudioTap {
    fn drop(&mut self) {
        self.guard.store(false, Ordering::SeqCst);
    }
}

pub struct CallManager {
    engine: AtEngine,
    cfg: CallConfig,
    inner: Mutex<Inner>,
    events: broadcast::Sender<CallEvent>,
    me: Weak<CallManager>,
}

/// Accepts `+digits`, `digits`, `*`/`#` sequences and `>index` memory dialing.
pub fn validate_dial_string(s: &str) -> Result<(), CallError> {
    let ok = if let Some(idx) = s.strip_prefix('>') {
        !idx.is_empty() && idx.chars().all(|c| c.is_ascii_digit())
    } else {
        let digits = s.strip_prefix('+').unwrap_or(s);
        !digits.is_empty()
            && digits.len() <= 20
            && digits
                .chars()
                .all(|c| c.is_ascii_digit() || c == '*' || c == '#')
    };
    if ok {
        Ok(())
    } else {
        Err(CallError::InvalidNumber(s.to_owned()))
    }
}

fn new_call_id() -> String {
    format!("call-{:012x}", rand::thread_rng().gen::<u64>() >> 16)
}

impl CallManager {
    pub fn start(engine: AtEngine, cfg: CallConfig) -> Arc<CallManager> {
        let (events, _) = broadcast::channel(256);
        let mgr = Arc::new_cyclic(|me| CallManager {
            engine: engine.clone(),
            cfg,
            inner: Mutex::new(Inner::default()),
            events,
            me: me.clone(),
        });
        let mut urcs = engine.subscribe_urcs();
        let weak = Arc::downgrade(&mgr);
        tokio::spawn(async move {
            while let Some(urc) = urcs.recv().await {
                let Some(mgr) = weak.upgrade() else { return };
                mgr.on_urc(&urc);
            }
        });
        mgr
    }

    pub fn subscribe(&self) -> broadcast::Receiver<CallEvent> {
        self.events.subscribe()
    }

    fn emit(&self, ev: CallEvent) {
        let _ = self.events.send(ev);
    }

    fn snapshot(cur: &Current) -> CallSession {
        let mut s = cur.session.clone();
        if let Some(b) = &cur.bridge {
            s.rtp_stats = Some(b.stats());
            if let Some(rtp) = &mut s.rtp {
                rtp.remote = b.remote();
                rtp.ssrc = Some(b.ssrc());
            }
        }
        s
    }

    pub fn current(&self) -> Option<CallSession> {
        self.inner
            .lock()
            .unwrap()
            .current
            .as_ref()
            .map(Self::snapshot)
    }

    pub fn get(&self, id: &str) -> Option<CallSession> {
        let inner = self.inner.lock().unwrap();
        if let Some(cur) = inner.current.as_ref().filter(|c| c.session.id == id) {
            return Some(Self::snapshot(cur));
        }
        inner.ended.get(id).cloned()
    }

    async fn bind_rtp(&self) -> Result<Arc<UdpSocket>, CallError> {
        UdpSocket::bind(SocketAddr::new(self.cfg.rtp_bind, 0))
            .await
            .map(Arc::new)
            .map_err(|e| CallError::Audio(e.to_string()))
    }

    pub async fn dial(
        &self,
        number: &str,
        remote: Option<SocketAddr>,
    ) -> Result<CallSession, CallError> {
        validate_dial_string(number)?;
        let socket = self.bind_rtp().await?;
        let session = {
            let mut inner = self.inner.lock().unwrap();
            if inner.current.is_some() {
                return Err(CallError::Busy);
            }
            let mut session = CallSession::new(
                new_call_id(),
                CallDirection::Outgoing,
                Some(number.to_owned()),
            );
            session.rtp = Some(RtpEndpoint {
                local: socket
                    .local_addr()
                    .map_err(|e| CallError::Audio(e.to_string()))?,
                remote,
                payload_type: PT_PCMU,
                ssrc: None,
            });
            session.transition(CallState::Dialing)?;
            inner.current = Some(Current {
                session: session.clone(),
                socket: Some(socket),
                bridge: None,
                ws_busy: Arc::new(AtomicBool::new(false)),
            });
            session
        };
        self.emit(CallEvent::State(session.clone()));
        info!(id = session.id, number, "dialing");
        let me = self.me.upgrade().expect("manager alive");
        let id = session.id.clone();
        let cmd = AtCommand::dial(number);
        tokio::spawn(async move {
            let result = me.engine.execute(cmd).await;
            let cause = match &result {
                Ok(r) if r.result.is_ok() => None,
                Ok(r) => Some(match r.result {
                    FinalResult::Busy => Cause::Busy,
                    FinalResult::NoAnswer => Cause::NoAnswer,
                    FinalResult::NoCarrier => Cause::NoCarrier,
                    _ => Cause::Error,
                }),
                Err(_) => Some(Cause::Error),
            };
            match cause {
                None => {
                    if let Err(e) = me.go_active(&id).await {
                        warn!(id, "activating call: {e}");
                    }
                }
                Some(c) => me.terminate(&id, c),
            }
        });
        Ok(session)
    }

    pub async fn answer(
        &self,
        id: &str,
        remote: Option<SocketAddr>,
    ) -> Result<CallSession, CallError> {
        let socket = self.bind_rtp().await?;
        {
            let mut inner = self.inner.lock().unwrap();
            let cur = Self::current_mut(&mut inner, id)?;
            if cur.session.state != CallState::Ringing {
                return Err(CallError::InvalidState {
                    id: id.to_owned(),
                    state: cur.session.state.name(),
                });
            }
            cur.session.rtp = Some(RtpEndpoint {
                local: socket
                    .local_addr()
                    .map_err(|e| CallError::Audio(e.to_string()))?,
                remote,
                payload_type: PT_PCMU,
                ssrc: None,
            });
            cur.socket = Some(socket);
        }
        let result = self.engine.execute(AtCommand::execute("A")).await;
        match result {
            Ok(r) if r.result.is_ok() => self.go_active(id).await,
            Ok(_) | Err(AtError::Timeout(_)) | Err(AtError::TransportClosed) => {
                self.terminate(id, Cause::RemoteHangup);
                Err(CallError::InvalidState {
                    id: id.to_owned(),
                    state: "terminated",
                })
            }
            Err(e) => Err(CallError::Modem(e.to_string())),
        }
    }

    fn current_mut<'a>(inner: &'a mut Inner, id: &str) -> Result<&'a mut Current, CallError> {
        match inner.current.as_mut() {
            Some(c) if c.session.id == id => Ok(c),
            _ if inner.ended.contains_key(id) => Err(CallError::InvalidState {
                id: id.to_owned(),
                state: "terminated",
            }),
            _ => Err(CallError::NotFound(id.to_owned())),
        }
    }

    async fn go_active(&self, id: &str) -> Result<CallSession, CallError> {
        let (socket, remote) = {
            let mut inner = self.inner.lock().unwrap();
            let cur = Self::current_mut(&mut inner, id)?;
            cur.session.transition(CallState::Active)?;
            (
                cur.socket.clone(),
                cur.session.rtp.as_ref().and_then(|r| r.remote),
            )
        };
        let bridge = match (&self.cfg.modem_audio, socket) {
            (Some(t), Some(socket)) => match t.connect().await {
                Ok(audio) => {
                    let weak = self.me.clone();
                    let id2 = id.to_owned();
                    Some(Bridge::start(
                        audio,
                        socket,
                        remote,
                        Box::new(move || {
                            if let Some(m) = weak.upgrade() {
                                m.terminate(&id2, Cause::AudioLost);
                            }
                        }),
                    ))
                }
                Err(e) => {
                    warn!(id, "modem audio channel unavailable: {e}");
                    None
                }
            },
            _ => None,
        };
        let snapshot = {
            let mut inner = self.inner.lock().unwrap();
            match inner.current.as_mut() {
                Some(cur) if cur.session.id == id && cur.session.state == CallState::Active => {
                    cur.bridge = bridge;
                    Self::snapshot(cur)
                }
                _ => {
                    return self
                        .get(id)
                        .ok_or_else(|| CallError::NotFound(id.to_owned()));
                }
            }
        };
        info!(id, "call active");
        self.emit(CallEvent::State(snapshot.clone()));
        Ok(snapshot)
    }

    /// Ends the call. Idempotent for already terminated calls.
    pub async fn hangup(&self, id: &str) -> Result<CallSession, CallError> {
        let state = {
            let inner = self.inner.lock().unwrap();
            match inner.current.as_ref() {
                Some(c) if c.session.id == id => c.session.state,
                _ => {
                    return inner
                        .ended
                        .get(id)
                        .cloned()
                        .ok_or_else(|| CallError::NotFound(id.to_owned()))
                }
            }
        };
        let cause = match state {
            CallState::Ringing => Cause::Rejected,
            _ => Cause::LocalHangup,
        };
        if let Err(e) = self.engine.execute(AtCommand::execute("+CHUP")).await {
            warn!(id, "+CHUP: {e}");
        }
        self.terminate(id, cause);
        self.get(id)
            .ok_or_else(|| CallError::NotFound(id.to_owned()))
    }

    fn terminate(&self, id: &str, cause: Cause) {
        let snapshot = {
            let mut inner = self.inner.lock().unwrap();
            let Some(cur) = inner.current.as_mut().filter(|c| c.session.id == id) else {
                return;
            };
            if cur
                .session
                .transition(CallState::Terminated(cause))
                .is_err()
            {
                return;
            }
            let mut cur = inner.current.take().unwrap();
            let mut session = Self::snapshot(&cur);
            if let Some(b) = cur.bridge.take() {
                session.rtp_stats = Some(b.stop());
            }
            inner.ended.insert(id.to_owned(), session.clone());
            session
        };
        info!(id, ?cause, "call terminated");
        self.emit(CallEvent::State(snapshot));
    }

    pub fn attach_audio(&self, id: &str) -> Result<AudioTap, CallError> {
        let mut inner = self.inner.lock().unwrap();
        let cur = Self::current_mut(&mut inner, id)?;
        let bridge = cur.bridge.as_ref().ok_or(CallError::AudioUnavailable)?;
        if cur.ws_busy.swap(true, Ordering::SeqCst) {
            return Err(CallError::AudioInUse);
        }
        Ok(AudioTap {
            from_modem: bridge.subscribe_pcm(),
            to_modem: bridge.pcm_sink(),
            guard: cur.ws_busy.clone(),
        })
    }

    pub fn on_urc(&self, urc: &Urc) {
        match urc.prefix.as_str() {
            "+CRING" | "RING" => {
                let (kind, info) = if urc.prefix == "RING" {
                    ("VOICE".to_owned(), Default::default())
                } else {
                    parse_cring(&urc.payload)
                };
                let mut inner = self.inner.lock().unwrap();
                if inner.current.is_some() {
                    // refresh of the ringing call, or a second call we do not take
                    return;
                }
                let mut session = CallSession::new(new_call_id(), CallDirection::Incoming, None);
                session.incoming_info = Some(info);
                session
                    .transition(CallState::Ringing)
                    .expect("idle to ringing");
                if kind.starts_with("VOICE") {
                    inner.current = Some(Current {
                        session: session.clone(),
                        socket: None,
                        bridge: None,
                        ws_busy: Arc::new(AtomicBool::new(false)),
                    });
                    drop(inner);
                    info!(id = session.id, "incoming call");
                    self.emit(CallEvent::Incoming(session.clone()));
                    self.emit(CallEvent::State(session));
                } else {
                    session
                        .transition(CallState::Terminated(Cause::UnsupportedBearer))
                        .expect("ringing to terminated");
                    inner.ended.insert(session.id.clone(), session.clone());
                    drop(inner);
                    info!(id = session.id, kind, "rejecting non-voice call");
                    self.emit(CallEvent::State(session));
                    let engine = self.engine.clone();
                    tokio::spawn(async move {
                        let _ = engine.execute(AtCommand::execute("+CHUP")).await;
                    });
                }
            }
            "+CLIP" => {
                let Some(number) = parse_clip(&urc.payload) else {
                    return;
                };
                let snapshot = {
                    let mut inner = self.inner.lock().unwrap();
                    match inner.current.as_mut() {
                        Some(cur)
                            if cur.session.state == CallState::Ringing
                                && cur.session.peer.is_none() =>
                        {
                            cur.session.peer = Some(number);
                            cur.session.clone()
                        }
                        _ => return,
                    }
                };
                self.emit(CallEvent::State(snapshot));
            }
            "NO CARRIER" | "BUSY" | "NO ANSWER" => {
                let cause = match urc.prefix.as_str() {
                    "BUSY" => Cause::Busy,
                    "NO ANSWER" => Cause::NoAnswer,
                    _ => Cause::RemoteHangup,
                };
                let id = self
                    .inner
                    .lock()
                    .unwrap()
                    .current
                    .as_ref()
                    .map(|c| c.session.id.clone());
                if let Some(id) = id {
                    self.terminate(&id, cause);
                }
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dial_strings() {
        assert!(validate_dial_string("+33612345678").is_ok());
        assert!(validate_dial_string(">2").is_ok());
        assert!(validate_dial_string("*100#").is_ok());
        assert!(validate_dial_string("").is_err());
        assert!(validate_dial_string("+33;ATH").is_err());
        assert!(validate_dial_string(">").is_err());
    }
}
