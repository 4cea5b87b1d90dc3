//! Byte transports to the modem: serial device, TCP socket or an in-process
//! memory pipe.

use std::collections::HashMap;
use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use tokio::io::{AsyncRead, AsyncWrite, DuplexStream};
use tokio::sync::mpsc;

use super::AtError;

pub const DEFAULT_BAUD: u32 = 115_200;
const MEM_PIPE_CAPACITY: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Serial { path: String, baud: u32 },
    Tcp { host: String, port: u16 },
    Memory { id: String },
}

impl FromStr for Transport {
    type Err = AtError;

    /// `serial:<path>?baud=115200`, `tcp:<host>:<port>` or `mem:<id>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AtError::InvalidArgument(format!("bad transport {s:?}"));
        let (scheme, rest) = s.split_once(':').ok_or_else(bad)?;
        match scheme {
            "serial" => {
                let (path, query) = match rest.split_once('?') {
                    Some((p, q)) => (p, Some(q)),
                    None => (rest, None),
                };
                let mut baud = DEFAULT_BAUD;
                if let Some(q) = query {
                    for kv in q.split('&') {
                        match kv.split_once('=') {
                            Some(("baud", v)) => baud = v.parse().map_err(|_| bad())?,
                            _ => return Err(bad()),
                        }
                    }
                }
                if path.is_empty() {
                    return Err(bad());
                }
                Ok(Transport::Serial {
                    path: path.to_owned(),
                    baud,
                })
            }
            "tcp" => {
                let (host, port) = rest.rsplit_once(':').ok_or_else(bad)?;
                if host.is_empty() {
                    return Err(bad());
                }
                Ok(Transport::Tcp {
                    host: host.to_owned(),
                    port: port.parse().map_err(|_| bad())?,
                })
            }
            "mem" if !rest.is_empty() => Ok(Transport::Memory {
                id: rest.to_owned(),
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transport::Serial { path, baud } => write!(f, "serial:{path}?baud={baud}"),
            Transport::Tcp { host, port } => write!(f, "tcp:{host}:{port}"),
            Transport::Memory { id } => write!(f, "mem:{id}"),
        }
    }
}

impl Serialize for Transport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Transport {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

pub trait ByteStream: AsyncRead + AsyncWrite + Unpin + Send + 'static {}
impl<T: AsyncRead + AsyncWrite + Unpin + Send + 'static> ByteStream for T {}

pub type BoxedStream = Box<dyn ByteStream>;

impl Transport {
    pub async fn connect(&self) -> io::Result<BoxedStream> {
        match self {
            Transport::Serial { path, baud } => {
                use tokio_serial::SerialPortBuilderExt;
                let port = tokio_serial::new(path, *baud)
                    .open_native_async()
                    .map_err(io::Error::other)?;
                Ok(Box::new(port))
            }
            Transport::Tcp { host, port } => {
                let stream = tokio::net::TcpStream::connect((host.as_str(), *port)).await?;
                stream.set_nodelay(true)?;
                Ok(Box::new(stream))
            }
            Transport::Memory { id } => Ok(Box::new(mem_connect(id)?)),
        }
    }
}

type MemRegistry = Mutex<HashMap<String, mpsc::UnboundedSender<DuplexStream>>>;

fn mem_registry() -> &'static MemRegistry {
    static REGISTRY: OnceLock<MemRegistry> = OnceLock::new();
    REGISTRY.get_or_init(Default::default)
}

/// Accepting side of a `mem:<id>` endpoint.
pub struct MemListener {
    id: String,
    rx: mpsc::UnboundedReceiver<DuplexStream>,
}

impl MemListener {
    pub async fn accept(&mut self) -> Option<DuplexStream> {
        self.rx.recv().await
    }

    pub fn id(&self) -> &str {
        &self.id
    }
}

impl Drop for MemListener {
    fn drop(&mut self) {
        self.rx.close();
        let mut reg = mem_registry().lock().unwrap();
        if reg.get(&self.id).is_some_and(|tx| tx.is_closed()) {
            reg.remove(&self.id);
        }
    }
}

/// Registers a memory endpoint. Fails if the id is already listening.
pub fn mem_listen(id: &str) -> io::Result<MemListener> {
    let mut reg = mem_registry().lock().unwrap();
    if reg.get(id).is_some_and(|tx| !tx.is_closed()) {
        return Err(io::Error::new(
            io::ErrorKind::AddrInUse,
            format!("mem:{id} in use"),
        ));
    }
    let (tx, rx) = mpsc::unbounded_channel();
    reg.insert(id.to_owned(), tx);
    Ok(MemListener {
        id: id.to_owned(),
        rx,
    })
}

pub fn mem_connect(id: &str) -> io::Result<DuplexStream> {
    let reg = mem_registry().lock().unwrap();
    let tx = reg.get(id).ok_or_else(|| {
        io::Error::new(
            io::ErrorKind::ConnectionRefused,
            format!("mem:{id} not listening"),
        )
    })?;
    let (ours, theirs) = tokio::io::duplex(MEM_PIPE_CAPACITY);
    tx.send(theirs).map_err(|_| {
        io::Error::new(io::ErrorKind::ConnectionRefused, format!("mem:{id} closed"))
    })?;
    Ok(ours)
}
