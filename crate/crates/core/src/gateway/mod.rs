//! HTTP gateway: authenticated JSON API, server-sent events and the call
//! audio WebSocket, on top of the modem, call and MMS layers.

mod api;
mod audio;
pub mod config;
mod error;
pub mod events;
pub mod latency;
pub mod share;
pub mod surveillance;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;
use tokio::task::JoinHandle;
use tracing::{info, warn};

use crate::at::{quirks, AtEngine, EngineConfig};
use crate::call::{CallConfig, CallEvent, CallManager};
use crate::mms::{MmsConfig, MmsEvent, MmsManager};
use crate::services::{ModemServices, Service, ServiceError, ServiceEvent, ServicesConfig};

pub use config::{GatewayConfig, SmsMode};
pub use error::ApiError;
pub use events::{EventHub, EventKind, GatewayEvent};
pub use share::{ShareEntry, ShareStore};
pub use surveillance::SurveillanceConfig;

const INIT_RETRY: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("connecting to modem at {transport}: {source}")]
    Connect {
        transport: String,
        source: std::io::Error,
    },
    #[error("loading quirk profiles: {0}")]
    Quirks(crate::at::AtError),
    #[error("binding {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
}

/// A service published next to the derived ones, offered while every
/// service it requires is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonalizedService {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub requires: Vec<Service>,
}

/// Who a bearer token belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Caller {
    Admin,
    Owner(String),
}

pub struct Gateway {
    cfg: GatewayConfig,
    services: Arc<ModemServices>,
    calls: Arc<CallManager>,
    mms: Option<Arc<MmsManager>>,
    events: Arc<EventHub>,
    shares: ShareStore,
    ready: AtomicBool,
    init_error: RwLock<Option<ServiceError>>,
    surveillance: RwLock<Option<SurveillanceConfig>>,
    personalized: RwLock<BTreeMap<String, PersonalizedService>>,
    sent: Mutex<Vec<serde_json::Value>>,
}

impl Gateway {
    /// Connects to the modem and starts every layer. Modem initialization
    /// continues in the background until it succeeds.
    pub async fn start(cfg: GatewayConfig) -> Result<Arc<Gateway>, GatewayError> {
        cfg.validate()?;
        let stream = cfg
            .transport
            .connect()
            .await
            .map_err(|source| GatewayError::Connect {
                transport: cfg.transport.to_string(),
                source,
            })?;
        let engine = AtEngine::start(stream, EngineConfig::default());
        let quirk_profiles = match &cfg.quirk_profiles_path {
            Some(p) => quirks::load_profiles(p).map_err(GatewayError::Quirks)?,
            None => Vec::new(),
        };
        let services = ModemServices::new(
            engine.clone(),
            ServicesConfig {
                sim_pin: cfg.sim_pin.clone(),
                quirk_profiles,
                text_mode: cfg.sms_mode == SmsMode::Text,
                validity_relative: cfg.validity_relative,
                mms_enabled: cfg.mmsc_url.is_some(),
            },
        );
        let calls = CallManager::start(
            engine,
            CallConfig {
                modem_audio: cfg.modem_audio.clone(),
                rtp_bind: cfg.rtp_bind,
            },
        );
        let mms = cfg.mmsc_url.as_ref().map(|url| {
            let mut m = MmsConfig::new(url.clone());
            m.notify_status = cfg.mms_notify_status;
            MmsManager::new(m)
        });
        let gw = Arc::new(Gateway {
            events: Arc::new(EventHub::new(cfg.event_retention)),
            shares: ShareStore::new(&cfg.share_root),
            surveillance: RwLock::new(cfg.surveillance.clone()),
            services,
            calls,
            mms,
            ready: AtomicBool::new(false),
            init_error: RwLock::new(Some(ServiceError::NotReady("initializing".into()))),
            personalized: RwLock::new(BTreeMap::new()),
            sent: Mutex::new(Vec::new()),
            cfg,
        });
        gw.spawn_forwarders();
        tokio::spawn(Arc::clone(&gw).init_loop());
        Ok(gw)
    }

    async fn init_loop(self: Arc<Self>) {
        loop {
            match self.services.init().await {
                Ok((profile, catalog)) => {
                    *self.init_error.write().unwrap() = None;
                    self.ready.store(true, Ordering::SeqCst);
                    info!(?profile, services = ?catalog.derived_services, "modem ready");
                    let status = self.services.status().await;
                    self.events.publish(
                        EventKind::ModemStatus,
                        json!({ "ready": true, "profile": profile, "status": status }),
                    );
                    return;
                }
                Err(e) => {
                    // Retrying a rejected PIN would burn the remaining attempts.
                    let fatal = matches!(e, ServiceError::SimPinRequired | ServiceError::SimPuk)
                        || matches!(&e, ServiceError::InitFailed(c) if c.starts_with("+CPIN"));
                    warn!("modem init failed: {e}");
                    *self.init_error.write().unwrap() = Some(e);
                    if fatal || self.services.engine().is_closed() {
                        return;
                    }
                    tokio::time::sleep(INIT_RETRY).await;
                }
            }
        }
    }

    fn spawn_forwarders(self: &Arc<Self>) {
        let hub = self.events.clone();
        let mut rx = self.services.subscribe();
        tokio::spawn(async move {
            loop {
                match rx.recv().await {
                    Ok(ServiceEvent::SmsReceived(sms)) => {
                        hub.publish(EventKind::SmsReceived, to_json(&sms));
                    }
                    Ok(ServiceEvent::Registration { registration }) => {
                        hub.publish(
                            EventKind::ModemStatus,
                            json!({ "registration": registration }),
                        );
                    }
                    Err(RecvError::Lagged(n)) => warn!("dropped {n} modem events"),
                    Err(RecvError::Closed) => return,
                }
            }
        });

        let hub = self.events.clone();
        let mut rx = self.calls.subscribe();
        tokio::spawn(async move {
            loop {
                match rx.recv().await {
                    Ok(CallEvent::Incoming(s)) => {
                        hub.publish(EventKind::IncomingCall, to_json(&s));
                    }
                    Ok(CallEvent::State(s)) => {
                        hub.publish(EventKind::CallState, to_json(&s));
                    }
                    Err(RecvError::Lagged(n)) => warn!("dropped {n} call events"),
                    Err(RecvError::Closed) => return,
                }
            }
        });

        if let Some(mms) = &self.mms {
            let hub = self.events.clone();
            let mut rx = mms.subscribe();
            tokio::spawn(async move {
                loop {
                    match rx.recv().await {
                        Ok(MmsEvent::Received {
                            transaction_id,
                            message,
                        }) => {
                            hub.publish(
                                EventKind::MmsNotification,
                                json!({
                                    "stage": "retrieved",
                                    "transaction_id": transaction_id,
                                    "message": message,
                                }),
                            );
                        }
                        Ok(MmsEvent::DeliveryReport(r)) => {
                            hub.publish(EventKind::MmsDelivery, to_json(&r));
                        }
                        Ok(MmsEvent::State { .. }) => {}
                        Err(RecvError::Lagged(n)) => warn!("dropped {n} MMS events"),
                        Err(RecvError::Closed) => return,
                    }
                }
            });
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn services(&self) -> &Arc<ModemServices> {
        &self.services
    }

    pub fn calls(&self) -> &Arc<CallManager> {
        &self.calls
    }

    pub fn mms(&self) -> Option<&Arc<MmsManager>> {
        self.mms.as_ref()
    }

    pub fn events(&self) -> &Arc<EventHub> {
        &self.events
    }

    pub fn shares(&self) -> &ShareStore {
        &self.shares
    }

    pub fn is_ready(&self) -> bool {
        self.ready.load(Ordering::SeqCst)
    }

    /// Waits until modem initialization has succeeded.
    pub async fn wait_ready(&self, timeout: Duration) -> Result<(), ServiceError> {
        let deadline = tokio::time::Instant::now() + timeout;
        while !self.is_ready() {
            if tokio::time::Instant::now() >= deadline {
                return Err(self.not_ready());
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        Ok(())
    }

    fn not_ready(&self) -> ServiceError {
        self.init_error
            .read()
            .unwrap()
            .clone()
            .unwrap_or_else(|| ServiceError::NotReady("initializing".into()))
    }

    fn ensure_ready(&self) -> Result<(), ServiceError> {
        if self.is_ready() {
            Ok(())
        } else {
            Err(self.not_ready())
        }
    }

    pub fn caller(&self, token: &str) -> Option<Caller> {
        if constant_time_eq(token.as_bytes(), self.cfg.auth_token.as_bytes()) {
            return Some(Caller::Admin);
        }
        self.cfg
            .share_owners
            .iter()
            .find(|(t, _)| constant_time_eq(token.as_bytes(), t.as_bytes()))
            .map(|(_, owner)| Caller::Owner(owner.clone()))
    }

    pub fn surveillance(&self) -> Option<SurveillanceConfig> {
        self.surveillance.read().unwrap().clone()
    }

    pub fn router(self: &Arc<Self>) -> axum::Router {
        api::router(Arc::clone(self))
    }

    /// Serves the API on an already bound listener until the task is dropped.
    pub async fn serve(self: Arc<Self>, listener: TcpListener) -> std::io::Result<()> {
        let app = self.router();
        axum::serve(
            listener,
            app.into_make_service_with_connect_info::<SocketAddr>(),
        )
        .await
    }
}

/// A gateway serving HTTP in a background task.
pub struct RunningGateway {
    pub gateway: Arc<Gateway>,
    pub addr: SocketAddr,
    task: JoinHandle<()>,
}

impl RunningGateway {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(self) {
        self.task.abort();
    }
}

impl Drop for RunningGateway {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Starts a gateway and binds `cfg.http_bind` (port 0 picks a free port).
pub async fn spawn(cfg: GatewayConfig) -> Result<RunningGateway, GatewayError> {
    let listener = TcpListener::bind(cfg.http_bind)
        .await
        .map_err(|source| GatewayError::Bind {
            addr: cfg.http_bind,
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| GatewayError::Bind {
        addr: cfg.http_bind,
        source,
    })?;
    let gateway = Gateway::start(cfg).await?;
    let gw = Arc::clone(&gateway);
    let task = tokio::spawn(async move {
        if let Err(e) = gw.serve(listener).await {
            warn!("HTTP server stopped: {e}");
        }
    });
    info!(%addr, "gateway listening");
    Ok(RunningGateway {
        gateway,
        addr,
        task,
    })
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}
