//! The command engine: one reader task classifies every line coming from the
//! modem, one writer task runs queued commands strictly one at a time.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt, ReadHalf, WriteHalf};
use tokio::sync::{mpsc, oneshot};
use tokio::time::timeout_at;
use tracing::{debug, trace, warn};

use super::command::{serialize, AtCommand};
use super::quirks::{QuirkProfile, Rewritten};
use super::response::{parse_line, AtResponseLine, FinalResult, InfoLine, Line, Urc, UrcRegistry};
use super::transport::ByteStream;
use super::AtError;

const CTRL_Z: u8 = 0x1A;
const ESC: u8 = 0x1B;
const MAX_LINE: usize = 4096;
const MAX_DRAIN: Duration = Duration::from_secs(5);

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub urcs: UrcRegistry,
    /// Quiet period that ends recovery after a timed-out command.
    pub drain_quiet: Duration,
    /// URCs retained while nobody is subscribed.
    pub urc_backlog: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            urcs: UrcRegistry::default(),
            drain_quiet: Duration::from_millis(200),
            urc_backlog: 1024,
        }
    }
}

/// Information lines and final result of one command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtResponse {
    pub info: Vec<InfoLine>,
    pub result: FinalResult,
    /// Set when a payload submission was cancelled with ESC.
    pub aborted: bool,
}

impl AtResponse {
    pub fn is_ok(&self) -> bool {
        self.result.is_ok()
    }

    pub fn first(&self, prefix: &str) -> Option<&InfoLine> {
        self.info.iter().find(|l| l.prefix == prefix)
    }

    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a InfoLine> + 'a {
        self.info.iter().filter(move |l| l.prefix == prefix)
    }
}

/// Body written after the `> ` prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Terminated with Ctrl-Z.
    Data(Vec<u8>),
    /// Sends ESC, cancelling the submission.
    Abort,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub executed: u64,
    pub timeouts: u64,
    pub lines: u64,
    pub urcs: u64,
    pub urcs_dropped: u64,
    /// Highest number of commands ever simultaneously awaiting a final result.
    pub max_in_flight: usize,
}

struct Job {
    cmd: AtCommand,
    payload: Option<Payload>,
    reply: oneshot::Sender<Result<AtResponse, AtError>>,
}

struct InFlight {
    name: String,
    echo: String,
    expects_prompt: bool,
    prompt_seen: bool,
    tx: mpsc::UnboundedSender<AtResponseLine>,
}

struct HubInner {
    subscribers: Vec<mpsc::UnboundedSender<Urc>>,
    backlog: VecDeque<Urc>,
    capacity: usize,
    dropped: u64,
}

/// Broadcast of URCs to every live subscriber; buffers while there are none.
struct UrcHub {
    inner: Mutex<HubInner>,
}

impl UrcHub {
    fn new(capacity: usize) -> Self {
        UrcHub {
            inner: Mutex::new(HubInner {
                subscribers: Vec::new(),
                backlog: VecDeque::new(),
                capacity,
                dropped: 0,
            }),
        }
    }

    fn publish(&self, urc: Urc) {
        let mut inner = self.inner.lock().unwrap();
        inner.subscribers.retain(|s| !s.is_closed());
        if inner.subscribers.is_empty() {
            if inner.backlog.len() >= inner.capacity {
                inner.backlog.pop_front();
                inner.dropped += 1;
            }
            inner.backlog.push_back(urc);
        } else {
            for s in &inner.subscribers {
                let _ = s.send(urc.clone());
            }
        }
    }

    fn subscribe(&self) -> UrcSubscription {
        let (tx, rx) = mpsc::unbounded_channel();
        let mut inner = self.inner.lock().unwrap();
        for urc in inner.backlog.drain(..) {
            let _ = tx.send(urc);
        }
        inner.subscribers.push(tx);
        UrcSubscription { rx }
    }
}

pub struct UrcSubscription {
    rx: mpsc::UnboundedReceiver<Urc>,
}

impl UrcSubscription {
    pub async fn recv(&mut self) -> Option<Urc> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<Urc> {
        self.rx.try_recv().ok()
    }

    pub fn into_stream(self) -> tokio_stream::wrappers::UnboundedReceiverStream<Urc> {
        tokio_stream::wrappers::UnboundedReceiverStream::new(self.rx)
    }
}

struct Shared {
    in_flight: Mutex<Option<InFlight>>,
    registry: RwLock<UrcRegistry>,
    quirks: RwLock<Option<QuirkProfile>>,
    hub: UrcHub,
    last_rx: Mutex<Instant>,
    closed: AtomicBool,
    active: AtomicUsize,
    max_active: AtomicUsize,
    executed: AtomicU64,
    timeouts: AtomicU64,
    lines: AtomicU64,
    urcs: AtomicU64,
    drain_quiet: Duration,
}

/// Handle to a running engine. Cloning is cheap; all clones share the queue.
#[derive(Clone)]
pub struct AtEngine {
    jobs: mpsc::UnboundedSender<Job>,
    shared: Arc<Shared>,
}

impl AtEngine {
    /// Takes ownership of `stream` and spawns the reader and writer tasks.
    pub fn start<S: ByteStream>(stream: S, config: EngineConfig) -> AtEngine {
        let (read, write) = tokio::io::split(stream);
        let shared = Arc::new(Shared {
            in_flight: Mutex::new(None),
            registry: RwLock::new(config.urcs),
            quirks: RwLock::new(None),
            hub: UrcHub::new(config.urc_backlog),
            last_rx: Mutex::new(Instant::now()),
            closed: AtomicBool::new(false),
            active: AtomicUsize::new(0),
            max_active: AtomicUsize::new(0),
            executed: AtomicU64::new(0),
            timeouts: AtomicU64::new(0),
            lines: AtomicU64::new(0),
            urcs: AtomicU64::new(0),
            drain_quiet: config.drain_quiet,
        });
        let (jobs, rx) = mpsc::unbounded_channel();
        tokio::spawn(reader_loop(read, shared.clone()));
        tokio::spawn(writer_loop(write, rx, shared.clone()));
        AtEngine { jobs, shared }
    }

    /// Queues a command and waits for its final result.
    pub async fn execute(&self, cmd: AtCommand) -> Result<AtResponse, AtError> {
        self.submit(cmd, None).await
    }

    /// Runs a prompt-expecting command and writes `payload` after the prompt.
    pub async fn execute_with_payload(
        &self,
        cmd: AtCommand,
        payload: Payload,
    ) -> Result<AtResponse, AtError> {
        if !cmd.expects_prompt {
            return Err(AtError::InvalidArgument(format!(
                "{} does not expect a prompt",
                cmd.name
            )));
        }
        if matches!(&payload, Payload::Data(d) if d.is_empty()) {
            return Err(AtError::InvalidArgument("empty payload".into()));
        }
        self.submit(cmd, Some(payload)).await
    }

    async fn submit(
        &self,
        cmd: AtCommand,
        payload: Option<Payload>,
    ) -> Result<AtResponse, AtError> {
        cmd.validate()?;
        if self.is_closed() {
            return Err(AtError::TransportClosed);
        }
        let (reply, rx) = oneshot::channel();
        self.jobs
            .send(Job {
                cmd,
                payload,
                reply,
            })
            .map_err(|_| AtError::TransportClosed)?;
        rx.await.map_err(|_| AtError::TransportClosed)?
    }

    pub fn subscribe_urcs(&self) -> UrcSubscription {
        self.shared.hub.subscribe()
    }

    pub fn register_urc(&self, prefix: &str) {
        self.shared.registry.write().unwrap().register(prefix);
    }

    pub fn set_quirks(&self, profile: Option<QuirkProfile>) {
        *self.shared.quirks.write().unwrap() = profile;
    }

    pub fn quirks(&self) -> Option<QuirkProfile> {
        self.shared.quirks.read().unwrap().clone()
    }

    pub fn is_closed(&self) -> bool {
        self.shared.closed.load(Ordering::SeqCst)
    }

    pub fn stats(&self) -> EngineStats {
        let s = &self.shared;
        EngineStats {
            executed: s.executed.load(Ordering::Relaxed),
            timeouts: s.timeouts.load(Ordering::Relaxed),
            lines: s.lines.load(Ordering::Relaxed),
            urcs: s.urcs.load(Ordering::Relaxed),
            urcs_dropped: s.hub.inner.lock().unwrap().dropped,
            max_in_flight: s.max_active.load(Ordering::SeqCst),
        }
    }
}

async fn reader_loop<S: AsyncRead>(mut read: ReadHalf<S>, shared: Arc<Shared>) {
    let mut line = Vec::with_capacity(256);
    let mut chunk = [0u8; 2048];
    let mut pending_two_line: Option<Urc> = None;
    loop {
        let n = match read.read(&mut chunk).await {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        *shared.last_rx.lock().unwrap() = Instant::now();
        for &b in &chunk[..n] {
            if b == b'\r' || b == b'\n' {
                if !line.is_empty() {
                    handle_line(&shared, &line, &mut pending_two_line);
                    line.clear();
                }
            } else {
                line.push(b);
                if line.len() >= MAX_LINE {
                    handle_line(&shared, &line, &mut pending_two_line);
                    line.clear();
                }
            }
        }
        // the prompt is not line-terminated
        if !line.is_empty() && line[0] == b'>' && line.len() <= 2 {
            let mut guard = shared.in_flight.lock().unwrap();
            if let Some(f) = guard.as_mut() {
                if f.expects_prompt && !f.prompt_seen {
                    f.prompt_seen = true;
                    let _ = f.tx.send(AtResponseLine::Prompt);
                    shared.lines.fetch_add(1, Ordering::Relaxed);
                    line.clear();
                }
            }
        }
    }
    debug!("modem transport closed");
    shared.closed.store(true, Ordering::SeqCst);
    shared.in_flight.lock().unwrap().take();
}

fn publish(shared: &Shared, urc: Urc) {
    trace!(prefix = %urc.prefix, payload = %urc.payload, "urc");
    shared.urcs.fetch_add(1, Ordering::Relaxed);
    shared.hub.publish(urc);
}

fn handle_line(shared: &Shared, raw: &[u8], pending_two_line: &mut Option<Urc>) {
    shared.lines.fetch_add(1, Ordering::Relaxed);
    if let Some(mut urc) = pending_two_line.take() {
        urc.payload.push('\n');
        urc.payload.push_str(String::from_utf8_lossy(raw).trim());
        publish(shared, urc);
        return;
    }
    let classified = {
        let registry = shared.registry.read().unwrap();
        let line = parse_line(raw, &registry);
        if let Line::Urc(u) = &line {
            if registry.is_two_line(&u.prefix) {
                let in_flight_owns = shared
                    .in_flight
                    .lock()
                    .unwrap()
                    .as_ref()
                    .is_some_and(|f| f.name == u.prefix);
                if !in_flight_owns {
                    *pending_two_line = Some(u.clone());
                    return;
                }
            }
        }
        line
    };
    let mut guard = shared.in_flight.lock().unwrap();
    match (classified, guard.as_mut()) {
        (Line::Urc(u), Some(f)) if f.name == u.prefix => {
            let text = String::from_utf8_lossy(raw);
            let _ =
                f.tx.send(AtResponseLine::Info(InfoLine::new(text.trim_end())));
        }
        (Line::Urc(u), _) => publish(shared, u),
        (Line::Response(resp), Some(f)) => match resp {
            AtResponseLine::Empty => {}
            AtResponseLine::Echo(e) if e.eq_ignore_ascii_case(&f.echo) => {}
            AtResponseLine::Echo(e) => {
                let _ = f.tx.send(AtResponseLine::Info(InfoLine::new(&e)));
            }
            AtResponseLine::Prompt => {
                if f.expects_prompt && !f.prompt_seen {
                    f.prompt_seen = true;
                    let _ = f.tx.send(AtResponseLine::Prompt);
                }
            }
            AtResponseLine::Final(r) => {
                let _ = f.tx.send(AtResponseLine::Final(r));
                *guard = None;
            }
            info @ AtResponseLine::Info(_) => {
                let _ = f.tx.send(info);
            }
        },
        (Line::Response(resp), None) => match resp {
            AtResponseLine::Info(i) => publish(shared, Urc::new("?", i.line)),
            AtResponseLine::Final(r) => publish(shared, Urc::new(r.to_string(), "")),
            AtResponseLine::Echo(_) | AtResponseLine::Prompt | AtResponseLine::Empty => {}
        },
    }
}

async fn writer_loop<S: AsyncWrite>(
    mut write: WriteHalf<S>,
    mut jobs: mpsc::UnboundedReceiver<Job>,
    shared: Arc<Shared>,
) {
    while let Some(job) = jobs.recv().await {
        let result = if shared.closed.load(Ordering::SeqCst) {
            Err(AtError::TransportClosed)
        } else {
            let active = shared.active.fetch_add(1, Ordering::SeqCst) + 1;
            shared.max_active.fetch_max(active, Ordering::SeqCst);
            let r = run_job(&mut write, &shared, job.cmd, job.payload).await;
            shared.active.fetch_sub(1, Ordering::SeqCst);
            shared.executed.fetch_add(1, Ordering::Relaxed);
            r
        };
        let _ = job.reply.send(result);
    }
}

async fn run_job<S: AsyncWrite>(
    write: &mut WriteHalf<S>,
    shared: &Shared,
    cmd: AtCommand,
    payload: Option<Payload>,
) -> Result<AtResponse, AtError> {
    let profile = shared.quirks.read().unwrap().clone();
    let cmd = match profile.as_ref().map(|p| p.rewrite(&cmd)) {
        Some(Rewritten::Unsupported) => return Err(AtError::Unsupported(cmd.name)),
        Some(Rewritten::Send(c)) => c,
        None => cmd,
    };
    let bytes = serialize(&cmd)?;
    let (tx, mut rx) = mpsc::unbounded_channel();
    *shared.in_flight.lock().unwrap() = Some(InFlight {
        name: cmd.name.clone(),
        echo: cmd.body(),
        expects_prompt: cmd.expects_prompt,
        prompt_seen: false,
        tx,
    });
    trace!(command = %cmd, "send");
    if write_all(write, &bytes).await.is_err() {
        shared.in_flight.lock().unwrap().take();
        return Err(AtError::TransportClosed);
    }

    let mut info = Vec::new();
    let mut deadline = tokio::time::Instant::now() + cmd.timeout;

    if let Some(payload) = payload {
        loop {
            match timeout_at(deadline, rx.recv()).await {
                Ok(Some(AtResponseLine::Prompt)) => break,
                Ok(Some(AtResponseLine::Info(i))) => info.push(i),
                Ok(Some(AtResponseLine::Final(result))) => {
                    return Ok(AtResponse {
                        info,
                        result,
                        aborted: false,
                    })
                }
                Ok(Some(_)) => {}
                Ok(None) => return Err(AtError::TransportClosed),
                Err(_) => {
                    warn!(command = %cmd, "prompt never arrived");
                    let _ = write_all(write, &[ESC]).await;
                    shared.in_flight.lock().unwrap().take();
                    drain(shared).await;
                    return Err(AtError::PromptNeverArrived);
                }
            }
        }
        let (body, aborted) = match payload {
            Payload::Data(mut d) => {
                d.push(CTRL_Z);
                (d, false)
            }
            Payload::Abort => (vec![ESC], true),
        };
        if write_all(write, &body).await.is_err() {
            shared.in_flight.lock().unwrap().take();
            return Err(AtError::TransportClosed);
        }
        deadline = tokio::time::Instant::now() + cmd.timeout;
        return collect_final(shared, &cmd, &mut rx, deadline, info, aborted).await;
    }
    collect_final(shared, &cmd, &mut rx, deadline, info, false).await
}

async fn collect_final(
    shared: &Shared,
    cmd: &AtCommand,
    rx: &mut mpsc::UnboundedReceiver<AtResponseLine>,
    deadline: tokio::time::Instant,
    mut info: Vec<InfoLine>,
    aborted: bool,
) -> Result<AtResponse, AtError> {
    loop {
        match timeout_at(deadline, rx.recv()).await {
            Ok(Some(AtResponseLine::Final(result))) => {
                return Ok(AtResponse {
                    info,
                    result,
                    aborted,
                })
            }
            Ok(Some(AtResponseLine::Info(i))) => info.push(i),
            Ok(Some(_)) => {}
            Ok(None) => return Err(AtError::TransportClosed),
            Err(_) => {
                warn!(command = %cmd, "timed out");
                shared.timeouts.fetch_add(1, Ordering::Relaxed);
                shared.in_flight.lock().unwrap().take();
                drain(shared).await;
                return Err(AtError::Timeout(cmd.body()));
            }
        }
    }
}

async fn write_all<S: AsyncWrite>(write: &mut WriteHalf<S>, bytes: &[u8]) -> std::io::Result<()> {
    write.write_all(bytes).await?;
    write.flush().await
}

/// Waits until the modem has been silent for the configured quiet period.
async fn drain(shared: &Shared) {
    let started = Instant::now();
    loop {
        tokio::time::sleep(shared.drain_quiet).await;
        let last = *shared.last_rx.lock().unwrap();
        if last.elapsed() >= shared.drain_quiet || started.elapsed() >= MAX_DRAIN {
            break;
        }
    }
}
