//! I/O around the command interpreter: AT connections, ring cadence, the
//! audio side-channel and the control operations.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, watch};
use tokio::task::JoinHandle;
use tracing::{debug, info};

use super::handler::{self, frame, Effect, Pending};
use super::oracle::{self, Concat, Timestamp};
use super::state::{CallDir, DialOutcome, SimCallState, SimConfig, SimState, ToneConfig};
use crate::at::transport::mem_listen;

const CTRL_Z: u8 = 0x1A;
const ESC: u8 = 0x1B;
const MAX_LINE: usize = 4096;
const FRAME_SAMPLES: usize = 160;
const FRAME_INTERVAL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ControlError {
    #[error("message store {storage} is full")]
    StoreFull { storage: String, overflow: bool },
    #[error("a call is already in progress")]
    Busy,
    #[error("invalid request: {message}")]
    Invalid { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CallPhase {
    Idle,
    Active(u64),
}

struct Inner {
    state: Mutex<SimState>,
    urcs: broadcast::Sender<Vec<u8>>,
    phase: watch::Sender<CallPhase>,
    audio_bytes_in: AtomicU64,
    audio_frames_out: AtomicU64,
    concat_ref: Mutex<u8>,
    interleave: Mutex<Option<String>>,
    started: tokio::time::Instant,
}

/// A virtual modem. Clones share one state; every connection sees the same
/// stores, registration and call.
#[derive(Clone)]
pub struct Sim {
    inner: Arc<Inner>,
}

#[derive(Debug, Clone, Copy)]
pub struct SimPorts {
    pub at: SocketAddr,
    pub control: SocketAddr,
    pub audio: SocketAddr,
}

/// Listener tasks of a running simulator; dropping it stops accepting.
pub struct SimServer {
    pub sim: Sim,
    pub ports: Option<SimPorts>,
    tasks: Vec<JoinHandle<()>>,
}

impl Drop for SimServer {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InjectedSms {
    pub storage: String,
    pub indices: Vec<u32>,
    pub pdus: Vec<String>,
}

/// Splits text into the parts a network would deliver, with the capacity
/// of one SMS (160 septets or 70 UCS-2 units) and 153/67 once concatenated.
pub fn split_text(text: &str) -> Vec<String> {
    let gsm = oracle::is_gsm(text);
    let cost = |c: char| -> usize {
        if gsm {
            if "\u{000C}^{}\\[~]|€".contains(c) {
                2
            } else {
                1
            }
        } else {
            c.len_utf16()
        }
    };
    let (single, multi) = if gsm { (160, 153) } else { (70, 67) };
    if text.chars().map(cost).sum::<usize>() <= single {
        return vec![text.to_owned()];
    }
    let mut parts = Vec::new();
    let mut cur = String::new();
    let mut used = 0;
    for c in text.chars() {
        if used + cost(c) > multi {
            parts.push(std::mem::take(&mut cur));
            used = 0;
        }
        cur.push(c);
        used += cost(c);
    }
    parts.push(cur);
    parts
}

fn tone_frame(tone: &ToneConfig, frame_index: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_SAMPLES * 2);
    for i in 0..FRAME_SAMPLES as u64 {
        let n = frame_index * FRAME_SAMPLES as u64 + i;
        let v = (tone.amplitude as f64 * (2.0 * PI * tone.frequency_hz * n as f64 / 8000.0).sin())
            .round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

impl Sim {
    pub fn new(cfg: SimConfig) -> Sim {
        let (urcs, _) = broadcast::channel(256);
        let (phase, _) = watch::channel(CallPhase::Idle);
        Sim {
            inner: Arc::new(Inner {
                state: Mutex::new(SimState::new(cfg)),
                urcs,
                phase,
                audio_bytes_in: AtomicU64::new(0),
                audio_frames_out: AtomicU64::new(0),
                concat_ref: Mutex::new(0),
                interleave: Mutex::new(None),
                started: tokio::time::Instant::now(),
            }),
        }
    }

    fn network_time(&self) -> Timestamp {
        match self.state().cfg.clock_base {
            Some(base) => {
                let elapsed = self.inner.started.elapsed();
                Timestamp::at(base + chrono::Duration::from_std(elapsed).unwrap_or_default())
            }
            None => Timestamp::now(),
        }
    }

    pub fn state(&self) -> MutexGuard<'_, SimState> {
        self.inner.state.lock().unwrap()
    }

    /// Writes an unsolicited line to every AT connection.
    pub fn emit(&self, line: &str) {
        let _ = self.inner.urcs.send(frame(line));
    }

    /// Inserts `urc` between the first two information lines of the next
    /// response that has at least two.
    pub fn interleave_next(&self, urc: &str) {
        *self.inner.interleave.lock().unwrap() = Some(urc.to_owned());
    }

    fn splice_urc(&self, bytes: &mut Vec<u8>) {
        let mut slot = self.inner.interleave.lock().unwrap();
        if slot.is_none() {
            return;
        }
        let boundary = bytes.windows(5).position(|w| w == b"\r\n\r\n+");
        if let (Some(i), Some(urc)) = (boundary, slot.as_ref()) {
            let framed = frame(urc);
            bytes.splice(i + 2..i + 2, framed);
            *slot = None;
        }
    }

    pub fn audio_bytes_in(&self) -> u64 {
        self.inner.audio_bytes_in.load(Ordering::Relaxed)
    }

    pub fn audio_frames_out(&self) -> u64 {
        self.inner.audio_frames_out.load(Ordering::Relaxed)
    }

    /// Serves AT on `port`, control HTTP on `port + 1` and audio on
    /// `port + 2`. Port 0 picks three ephemeral ports.
    pub async fn listen_tcp(&self, host: &str, port: u16) -> std::io::Result<SimServer> {
        let bind = |p: u16| TcpListener::bind((host.to_owned(), p));
        let (at, control, audio) = if port == 0 {
            (bind(0).await?, bind(0).await?, bind(0).await?)
        } else {
            (
                bind(port).await?,
                bind(port + 1).await?,
                bind(port + 2).await?,
            )
        };
        let ports = SimPorts {
            at: at.local_addr()?,
            control: control.local_addr()?,
            audio: audio.local_addr()?,
        };
        info!(?ports, "simulator listening");
        let mut tasks = Vec::new();
        let sim = self.clone();
        tasks.push(tokio::spawn(async move {
            while let Ok((s, peer)) = at.accept().await {
                debug!(%peer, "AT connection");
                let _ = s.set_nodelay(true);
                sim.serve_at(s);
            }
        }));
        let sim = self.clone();
        tasks.push(tokio::spawn(async move {
            while let Ok((s, _)) = audio.accept().await {
                let _ = s.set_nodelay(true);
                sim.serve_audio(s);
            }
        }));
        let app = super::control::router(self.clone());
        tasks.push(tokio::spawn(async move {
            let _ = axum::serve(control, app).await;
        }));
        Ok(SimServer {
            sim: self.clone(),
            ports: Some(ports),
            tasks,
        })
    }

    /// Serves AT on `mem:<id>` and audio on `mem:<id>-audio`.
    pub fn listen_mem(&self, id: &str) -> std::io::Result<SimServer> {
        let mut at = mem_listen(id)?;
        let mut audio = mem_listen(&format!("{id}-audio"))?;
        let mut tasks = Vec::new();
        let sim = self.clone();
        tasks.push(tokio::spawn(async move {
            while let Some(s) = at.accept().await {
                sim.serve_at(s);
            }
        }));
        let sim = self.clone();
        tasks.push(tokio::spawn(async move {
            while let Some(s) = audio.accept().await {
                sim.serve_audio(s);
            }
        }));
        Ok(SimServer {
            sim: self.clone(),
            ports: None,
            tasks,
        })
    }

    /// Runs the AT protocol on one byte stream until it closes.
    pub fn serve_at<S>(&self, stream: S) -> JoinHandle<()>
    where
        S: AsyncRead + AsyncWrite + Send + Unpin + 'static,
    {
        let sim = self.clone();
        tokio::spawn(async move { sim.run_at(stream).await })
    }

    async fn run_at<S>(self, stream: S)
    where
        S: AsyncRead + AsyncWrite + Send + Unpin + 'static,
    {
        let (mut rd, mut wr) = tokio::io::split(stream);
        let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Vec<u8>>();
        let writer = tokio::spawn(async move {
            while let Some(bytes) = out_rx.recv().await {
                if wr.write_all(&bytes).await.is_err() {
                    break;
                }
                let _ = wr.flush().await;
            }
        });
        let mut urc_rx = self.inner.urcs.subscribe();
        let urc_out = out_tx.clone();
        let urc_task = tokio::spawn(async move {
            loop {
                match urc_rx.recv().await {
                    Ok(b) => {
                        if urc_out.send(b).is_err() {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        });

        let mut buf = [0u8; 1024];
        let mut line: Vec<u8> = Vec::new();
        let mut pending: Option<Pending> = None;
        let mut payload: Vec<u8> = Vec::new();
        'outer: loop {
            let n = match rd.read(&mut buf).await {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            for &b in &buf[..n] {
                if let Some(p) = pending.as_ref() {
                    match b {
                        CTRL_Z | ESC => {
                            let body = (b == CTRL_Z).then_some(payload.as_slice());
                            let reply = handler::handle_payload(&mut self.state(), p.clone(), body);
                            pending = None;
                            payload.clear();
                            if out_tx.send(reply.bytes).is_err() {
                                break 'outer;
                            }
                        }
                        _ if payload.len() < MAX_LINE => payload.push(b),
                        _ => {}
                    }
                    continue;
                }
                if b == b'\r' || b == b'\n' {
                    if line.is_empty() {
                        continue;
                    }
                    let text = String::from_utf8_lossy(&line).into_owned();
                    line.clear();
                    let mut reply = handler::handle_line(&mut self.state(), &text);
                    pending = reply.pending;
                    self.splice_urc(&mut reply.bytes);
                    if out_tx.send(reply.bytes).is_err() {
                        break 'outer;
                    }
                    for e in reply.effects {
                        self.apply(e, &out_tx);
                    }
                } else if line.len() < MAX_LINE {
                    line.push(b);
                }
            }
        }
        urc_task.abort();
        drop(out_tx);
        let _ = writer.await;
    }

    fn apply(&self, effect: Effect, out: &mpsc::UnboundedSender<Vec<u8>>) {
        match effect {
            Effect::Dial { generation } => {
                let sim = self.clone();
                let out = out.clone();
                let delay = Duration::from_millis(self.state().cfg.dial_delay_ms);
                tokio::spawn(async move {
                    tokio::time::sleep(delay).await;
                    let final_line = {
                        let mut st = sim.state();
                        if !st.call_in(generation, SimCallState::Dialing) {
                            return;
                        }
                        match st.dial_outcome {
                            DialOutcome::Answer => {
                                if let Some(c) = st.call.as_mut() {
                                    c.state = SimCallState::Active;
                                }
                                sim.inner.phase.send_replace(CallPhase::Active(generation));
                                "OK"
                            }
                            other => {
                                st.call = None;
                                match other {
                                    DialOutcome::Busy => "BUSY",
                                    DialOutcome::NoAnswer => "NO ANSWER",
                                    _ => "NO CARRIER",
                                }
                            }
                        }
                    };
                    let _ = out.send(frame(final_line));
                });
            }
            Effect::CallActive { generation } => {
                self.inner.phase.send_replace(CallPhase::Active(generation));
            }
            Effect::CallEnded { .. } => {
                self.inner.phase.send_replace(CallPhase::Idle);
            }
        }
    }

    /// Streams the configured tone to one audio connection for each active
    /// call, then closes it when the call ends.
    pub fn serve_audio<S>(&self, stream: S) -> JoinHandle<()>
    where
        S: AsyncRead + AsyncWrite + Send + Unpin + 'static,
    {
        let sim = self.clone();
        tokio::spawn(async move {
            let (mut rd, mut wr) = tokio::io::split(stream);
            let inner = sim.inner.clone();
            let reader = tokio::spawn(async move {
                let mut buf = [0u8; 4096];
                while let Ok(n) = rd.read(&mut buf).await {
                    if n == 0 {
                        break;
                    }
                    inner.audio_bytes_in.fetch_add(n as u64, Ordering::Relaxed);
                }
            });
            let mut phase = sim.inner.phase.subscribe();
            let generation = loop {
                if let CallPhase::Active(g) = *phase.borrow_and_update() {
                    break g;
                }
                if phase.changed().await.is_err() {
                    reader.abort();
                    return;
                }
            };
            let tone = sim.state().tone.clone();
            let frames = tone.duration_ms / FRAME_INTERVAL.as_millis() as u64;
            let mut ticker = tokio::time::interval(FRAME_INTERVAL);
            ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Burst);
            for i in 0..frames {
                ticker.tick().await;
                if *phase.borrow() != CallPhase::Active(generation) {
                    break;
                }
                if wr.write_all(&tone_frame(&tone, i)).await.is_err() {
                    break;
                }
                sim.inner.audio_frames_out.fetch_add(1, Ordering::Relaxed);
            }
            while *phase.borrow_and_update() == CallPhase::Active(generation) {
                if phase.changed().await.is_err() {
                    break;
                }
            }
            let _ = wr.shutdown().await;
            reader.abort();
        })
    }

    /// Delivers an SMS from the network. Long texts arrive as concatenated
    /// parts, each stored and announced separately.
    pub fn inject_sms(&self, from: &str, text: &str) -> Result<InjectedSms, ControlError> {
        let parts = split_text(text);
        let ts = self.network_time();
        let pdus: Vec<String> = if parts.len() == 1 {
            vec![oracle::deliver_hex(from, text, ts, None)]
        } else {
            let reference = {
                let mut r = self.inner.concat_ref.lock().unwrap();
                *r = r.wrapping_add(1);
                *r
            };
            let total = parts.len() as u8;
            parts
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let c = Concat {
                        reference,
                        total,
                        seq: i as u8 + 1,
                    };
                    oracle::deliver_hex(from, p, ts, Some(&c))
                })
                .collect()
        };
        self.inject_pdus(pdus)
    }

    /// Delivers ready-made SMS-DELIVER PDUs (hex, with SMSC prefix).
    pub fn inject_pdus(&self, pdus: Vec<String>) -> Result<InjectedSms, ControlError> {
        if pdus.is_empty()
            || pdus.iter().any(|p| {
                p.is_empty() || p.len() % 2 != 0 || !p.chars().all(|c| c.is_ascii_hexdigit())
            })
        {
            return Err(ControlError::Invalid {
                message: "PDUs must be non-empty hex".into(),
            });
        }
        let mut st = self.state();
        let storage = st.sms_storage.clone();
        let (mode, mt) = st.cnmi;
        if mt == 2 {
            for p in &pdus {
                let len = p.len() / 2 - 1 - usize::from_str_radix(&p[..2], 16).unwrap_or(0);
                let _ = self
                    .inner
                    .urcs
                    .send(format!("\r\n+CMT: ,{len}\r\n{p}\r\n").into_bytes());
            }
            return Ok(InjectedSms {
                storage,
                indices: vec![],
                pdus,
            });
        }
        let store = &st.sms[&storage];
        if (store.capacity as usize) < store.entries.len() + pdus.len() {
            return Err(ControlError::StoreFull {
                storage,
                overflow: true,
            });
        }
        let mut indices = Vec::new();
        for p in &pdus {
            let idx = handler::store_incoming(&mut st, &storage, p.to_ascii_uppercase())
                .expect("capacity checked");
            indices.push(idx);
            if mt == 1 && mode > 0 {
                self.emit(&format!("+CMTI: \"{storage}\",{idx}"));
            }
        }
        Ok(InjectedSms {
            storage,
            indices,
            pdus,
        })
    }

    /// Starts an incoming voice call that rings until answered or cleared.
    pub fn inject_call(&self, from: &str) -> Result<(), ControlError> {
        let (generation, interval) = {
            let mut st = self.state();
            if st.call.is_some() {
                return Err(ControlError::Busy);
            }
            let g = st.new_call(from, CallDir::Incoming, SimCallState::Ringing);
            (g, Duration::from_millis(st.cfg.ring_interval_ms))
        };
        let sim = self.clone();
        let from = from.to_owned();
        tokio::spawn(async move {
            loop {
                {
                    // emitted under the lock so no ring can follow an answer
                    let mut st = sim.state();
                    if !st.call_in(generation, SimCallState::Ringing) {
                        return;
                    }
                    let (crc, clip) = (st.crc, st.clip);
                    let call = st.call.as_mut().unwrap();
                    call.rings += 1;
                    let first = call.rings == 1;
                    sim.emit(if crc { "+CRING: VOICE" } else { "RING" });
                    if first && clip {
                        let ty = if from.starts_with('+') { 145 } else { 129 };
                        sim.emit(&format!("+CLIP: \"{from}\",{ty}"));
                    }
                }
                tokio::time::sleep(interval).await;
            }
        });
        Ok(())
    }

    /// The far end hangs up. Returns false when there was no call.
    pub fn remote_hangup(&self) -> bool {
        let mut st = self.state();
        match st.call.take() {
            Some(_) => {
                self.emit("NO CARRIER");
                self.inner.phase.send_replace(CallPhase::Idle);
                true
            }
            None => false,
        }
    }

    pub fn set_signal(&self, n: u8, ber: Option<u8>) {
        let mut st = self.state();
        st.signal_n = n;
        if let Some(b) = ber {
            st.ber = b;
        }
    }

    pub fn set_registration(&self, stat: u8) {
        let mut st = self.state();
        if st.registration != stat {
            st.registration = stat;
            if st.creg_mode > 0 {
                self.emit(&format!("+CREG: {stat}"));
            }
        }
    }

    pub fn set_capabilities(&self, commands: BTreeSet<String>) {
        self.state().capabilities = commands
            .into_iter()
            .map(|c| c.to_ascii_uppercase())
            .collect();
    }

    pub fn remove_capability(&self, command: &str) {
        self.state()
            .capabilities
            .remove(&command.to_ascii_uppercase());
    }

    pub fn add_capability(&self, command: &str) {
        self.state()
            .capabilities
            .insert(command.to_ascii_uppercase());
    }

    pub fn script_apdu(&self, table: HashMap<String, String>) {
        self.state().apdu_table = table
            .into_iter()
            .map(|(k, v)| (k.to_ascii_uppercase(), v.to_ascii_uppercase()))
            .collect();
    }

    pub fn set_tone(&self, tone: ToneConfig) {
        self.state().tone = tone;
    }

    pub fn set_dial_outcome(&self, outcome: DialOutcome) {
        self.state().dial_outcome = outcome;
    }

    pub fn state_json(&self) -> serde_json::Value {
        serde_json::to_value(&*self.state()).unwrap_or_default()
    }

    pub fn submits(&self) -> Vec<super::state::SubmitRecord> {
        self.state().submits.clone()
    }

    pub fn call_state(&self) -> Option<SimCallState> {
        self.state().call.as_ref().map(|c| c.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_boundaries() {
        assert_eq!(split_text(&"a".repeat(160)).len(), 1);
        let p = split_text(&"a".repeat(161));
        assert_eq!(p.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![153, 8]);
        assert_eq!(split_text(&"π".repeat(71)).len(), 2);
    }

    #[test]
    fn tone_is_continuous() {
        let t = ToneConfig::default();
        let a = tone_frame(&t, 0);
        assert_eq!(a.len(), 320);
        assert_eq!(i16::from_le_bytes([a[0], a[1]]), 0);
    }
}
