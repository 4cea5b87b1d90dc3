//! PCM ↔ RTP pump between the modem audio channel and a UDP peer.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::UdpSocket;
use tokio::sync::{broadcast, mpsc};
use tokio::task::JoinHandle;
use tracing::debug;

use super::g711;
use super::jitter::JitterBuffer;
use super::rtp::{
    pcm_to_le, RtpPacket, RtpSender, RtpStats, FRAME_BYTES, PT_PCMU, SAMPLES_PER_FRAME,
};
use crate::at::transport::BoxedStream;

pub const FRAME_INTERVAL: Duration = Duration::from_millis(20);
pub const JITTER_DEPTH: usize = 3;
/// Grace period between losing the audio channel and ending the call, so a
/// hangup indication racing the close wins.
pub const AUDIO_LOST_GRACE: Duration = Duration::from_millis(200);

pub type Frame = Arc<Vec<i16>>;

struct Shared {
    stats: Mutex<RtpStats>,
    remote: Mutex<Option<SocketAddr>>,
}

pub struct Bridge {
    shared: Arc<Shared>,
    ssrc: u32,
    tasks: Vec<JoinHandle<()>>,
    modem_pcm: broadcast::Sender<Frame>,
    to_modem: mpsc::Sender<Vec<i16>>,
}

impl Bridge {
    /// Starts the pumps. `on_lost` runs once if the audio channel closes
    /// while the bridge is still running.
    pub fn start(
        audio: BoxedStream,
        socket: Arc<UdpSocket>,
        remote: Option<SocketAddr>,
        on_lost: Box<dyn FnOnce() + Send>,
    ) -> Bridge {
        let shared = Arc::new(Shared {
            stats: Mutex::new(RtpStats::default()),
            remote: Mutex::new(remote),
        });
        let mut sender = RtpSender::random();
        let ssrc = sender.ssrc;
        let (modem_pcm, _) = broadcast::channel::<Frame>(64);
        let (to_modem, mut to_modem_rx) = mpsc::channel::<Vec<i16>>(64);
        let (mut rd, mut wr) = tokio::io::split(audio);
        let jitter = Arc::new(Mutex::new(JitterBuffer::<Vec<i16>>::new(JITTER_DEPTH)));
        let mut tasks = Vec::new();

        // modem -> RTP
        {
            let shared = shared.clone();
            let socket = socket.clone();
            let modem_pcm = modem_pcm.clone();
            tasks.push(tokio::spawn(async move {
                let mut buf = [0u8; FRAME_BYTES];
                loop {
                    if rd.read_exact(&mut buf).await.is_err() {
                        tokio::time::sleep(AUDIO_LOST_GRACE).await;
                        on_lost();
                        return;
                    }
                    let pcm: Vec<i16> = buf
                        .chunks_exact(2)
                        .map(|c| i16::from_le_bytes([c[0], c[1]]))
                        .collect();
                    let payload = g711::encode_frame(&pcm);
                    let _ = modem_pcm.send(Arc::new(pcm));
                    let remote = *shared.remote.lock().unwrap();
                    if let Some(remote) = remote {
                        let pkt = sender.packet(payload);
                        if let Err(e) = socket.send_to(&pkt.to_bytes(), remote).await {
                            debug!("rtp send: {e}");
                        }
                        shared.stats.lock().unwrap().packets_sent = sender.sent();
                    }
                }
            }));
        }

        // RTP -> jitter buffer
        {
            let shared = shared.clone();
            let jitter = jitter.clone();
            tasks.push(tokio::spawn(async move {
                let mut buf = [0u8; 2048];
                loop {
                    let Ok((n, from)) = socket.recv_from(&mut buf).await else {
                        return;
                    };
                    let Ok(pkt) = RtpPacket::parse(&buf[..n]) else {
                        continue;
                    };
                    if pkt.payload_type != PT_PCMU {
                        continue;
                    }
                    {
                        let mut remote = shared.remote.lock().unwrap();
                        if remote.is_none() {
                            *remote = Some(from);
                        }
                    }
                    shared.stats.lock().unwrap().packets_received += 1;
                    jitter
                        .lock()
                        .unwrap()
                        .push(pkt.seq, g711::decode_frame(&pkt.payload));
                }
            }));
        }

        // jitter buffer -> modem, one frame per tick
        {
            let shared = shared.clone();
            let to_modem = to_modem.clone();
            tasks.push(tokio::spawn(async move {
                let mut tick = tokio::time::interval(FRAME_INTERVAL);
                tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
                loop {
                    tick.tick().await;
                    let frame = {
                        let mut jb = jitter.lock().unwrap();
                        let f = jb.pop();
                        let mut st = shared.stats.lock().unwrap();
                        st.packets_late = jb.late;
                        st.frames_concealed = jb.concealed;
                        f
                    };
                    let frame = match frame {
                        Some(Some(f)) => f,
                        Some(None) => vec![0; SAMPLES_PER_FRAME],
                        None => continue,
                    };
                    if to_modem.send(frame).await.is_err() {
                        return;
                    }
                }
            }));
        }

        // single writer toward the modem
        tasks.push(tokio::spawn(async move {
            while let Some(frame) = to_modem_rx.recv().await {
                if wr.write_all(&pcm_to_le(&frame)).await.is_err() {
                    return;
                }
            }
        }));

        Bridge {
            shared,
            ssrc,
            tasks,
            modem_pcm,
            to_modem,
        }
    }

    pub fn ssrc(&self) -> u32 {
        self.ssrc
    }

    pub fn stats(&self) -> RtpStats {
        *self.shared.stats.lock().unwrap()
    }

    pub fn remote(&self) -> Option<SocketAddr> {
        *self.shared.remote.lock().unwrap()
    }

    pub fn set_remote(&self, remote: SocketAddr) {
        *self.shared.remote.lock().unwrap() = Some(remote);
    }

    /// PCM frames read from the modem.
    pub fn subscribe_pcm(&self) -> broadcast::Receiver<Frame> {
        self.modem_pcm.subscribe()
    }

    /// Sends PCM toward the modem, bypassing the jitter buffer.
    pub fn pcm_sink(&self) -> mpsc::Sender<Vec<i16>> {
        self.to_modem.clone()
    }

    pub fn stop(self) -> RtpStats {
        self.stats()
    }
}

impl Drop for Bridge {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}
