//! High-level modem façade: initialization, status, capability discovery,
//! SMS, message stores, phonebook, SIM access and data snapshots.

pub mod capability;
pub mod messages;
pub mod phonebook;
pub mod snapshot;
pub mod status;

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::{Arc, Mutex, RwLock, Weak};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast;
use tracing::{debug, info, warn};

use crate::at::{
    quirks, AtCommand, AtEngine, AtError, AtResponse, FinalResult, Payload, QuirkProfile, Urc,
};
use crate::sms::{self, Address, SmsError};

pub use capability::{CapabilityCatalog, CatalogSource, Service};
pub use messages::{MessageFilter, ReceivedSms, StoredSms};
pub use phonebook::{PhonebookEntry, PhonebookInfo};
pub use snapshot::{DataSnapshot, EditResult, SyncEdit};
pub use status::{ModemStatus, Registration};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("modem not ready: {0}")]
    NotReady(String),
    #[error("{} service unavailable", .0.name())]
    Unavailable(Service),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("SIM PIN required and none configured")]
    SimPinRequired,
    #[error("SIM PUK required")]
    SimPuk,
    #[error("init command {0} failed")]
    InitFailed(String),
    #[error("+CMS ERROR: {0}")]
    Cms(u32),
    #[error("+CME ERROR: {0}")]
    Cme(u32),
    #[error("invalid index")]
    InvalidIndex,
    #[error("storage full")]
    StorageFull,
    #[error("text too long")]
    TextTooLong,
    #[error("{0} returned ERROR")]
    CommandFailed(String),
    #[error("all segments failed")]
    SendFailed(SendReport),
    #[error(transparent)]
    At(#[from] AtError),
    #[error(transparent)]
    Sms(#[from] SmsError),
}

/// Maps a final result to the error the façade reports for it.
pub fn check(resp: AtResponse, command: &str) -> Result<AtResponse, ServiceError> {
    match resp.result {
        FinalResult::Ok | FinalResult::Connect => Ok(resp),
        FinalResult::CmeError(20) => Err(ServiceError::StorageFull),
        FinalResult::CmeError(21) => Err(ServiceError::InvalidIndex),
        FinalResult::CmeError(24) => Err(ServiceError::TextTooLong),
        FinalResult::CmeError(c) => Err(ServiceError::Cme(c)),
        FinalResult::CmsError(321) => Err(ServiceError::InvalidIndex),
        FinalResult::CmsError(322) => Err(ServiceError::StorageFull),
        FinalResult::CmsError(c) => Err(ServiceError::Cms(c)),
        _ => Err(ServiceError::CommandFailed(command.to_owned())),
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServicesConfig {
    pub sim_pin: Option<String>,
    pub quirk_profiles: Vec<QuirkProfile>,
    /// Use +CMGF=1 text mode instead of PDU mode for sending.
    pub text_mode: bool,
    pub validity_relative: Option<u8>,
    pub mms_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModemProfile {
    pub manufacturer: String,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quirk_profile: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentResult {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message_ref: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendReport {
    pub segments: Vec<SegmentResult>,
    pub concat_ref: Option<u8>,
}

impl SendReport {
    pub fn all_ok(&self) -> bool {
        self.segments.iter().all(|s| s.error.is_none())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServiceEvent {
    SmsReceived(ReceivedSms),
    Registration { registration: Registration },
}

pub struct ModemServices {
    engine: AtEngine,
    cfg: ServicesConfig,
    profile: RwLock<Option<ModemProfile>>,
    catalog: RwLock<Option<Arc<CapabilityCatalog>>>,
    concat_ref: AtomicU8,
    events: broadcast::Sender<ServiceEvent>,
    pending_concat: Mutex<HashMap<(String, u8), messages::PartialMessage>>,
    me: Weak<ModemServices>,
}

impl ModemServices {
    pub fn new(engine: AtEngine, cfg: ServicesConfig) -> Arc<Self> {
        let (events, _) = broadcast::channel(256);
        let svc = Arc::new_cyclic(|me| ModemServices {
            engine: engine.clone(),
            cfg,
            profile: RwLock::new(None),
            catalog: RwLock::new(None),
            concat_ref: AtomicU8::new(rand::random()),
            events,
            pending_concat: Mutex::new(HashMap::new()),
            me: me.clone(),
        });
        let mut urcs = engine.subscribe_urcs();
        let weak = Arc::downgrade(&svc);
        tokio::spawn(async move {
            while let Some(urc) = urcs.recv().await {
                let Some(svc) = weak.upgrade() else { return };
                svc.on_urc(urc);
            }
        });
        svc
    }

    pub fn engine(&self) -> &AtEngine {
        &self.engine
    }

    pub fn config(&self) -> &ServicesConfig {
        &self.cfg
    }

    pub fn subscribe(&self) -> broadcast::Receiver<ServiceEvent> {
        self.events.subscribe()
    }

    pub(crate) fn emit(&self, ev: ServiceEvent) {
        let _ = self.events.send(ev);
    }

    pub(crate) fn arc(&self) -> Option<Arc<ModemServices>> {
        self.me.upgrade()
    }

    pub async fn cmd(&self, cmd: AtCommand) -> Result<AtResponse, ServiceError> {
        let name = cmd.name.clone();
        let resp = self.engine.execute(cmd).await?;
        check(resp, &name)
    }

    pub fn profile(&self) -> Option<ModemProfile> {
        self.profile.read().unwrap().clone()
    }

    pub fn catalog(&self) -> Option<Arc<CapabilityCatalog>> {
        self.catalog.read().unwrap().clone()
    }

    pub fn require(&self, service: Service) -> Result<(), ServiceError> {
        match self.catalog() {
            None => Err(ServiceError::NotReady("modem not initialized".into())),
            Some(c) if c.offers(service) => Ok(()),
            Some(_) => Err(ServiceError::Unavailable(service)),
        }
    }

    async fn optional(&self, cmd: AtCommand) {
        let body = cmd.body();
        match self.cmd(cmd).await {
            Ok(_) => {}
            Err(ServiceError::At(AtError::Unsupported(_))) => {
                debug!("{body} skipped by quirk profile")
            }
            Err(e) => warn!("{body}: {e}"),
        }
    }

    /// Runs the initialization sequence and builds the capability catalog.
    pub async fn init(&self) -> Result<(ModemProfile, Arc<CapabilityCatalog>), ServiceError> {
        self.cmd(AtCommand::execute("E0"))
            .await
            .map_err(|_| ServiceError::InitFailed("E0".into()))?;
        self.optional(AtCommand::set("+CMEE", [1i64])).await;
        self.unlock_sim().await?;

        let manufacturer = self.identity("+CGMI").await;
        let model = self.identity("+CGMM").await;
        let identity = format!("{manufacturer} {model}");
        let selected = quirks::select(&self.cfg.quirk_profiles, &identity).cloned();
        if let Some(p) = &selected {
            info!(
                profile = p.model_match,
                "quirk profile selected for {identity}"
            );
        }
        self.engine.set_quirks(selected.clone());
        for extra in selected.iter().flat_map(|p| p.extra_init.clone()) {
            self.optional(extra).await;
        }
        let profile = ModemProfile {
            manufacturer,
            model,
            quirk_profile: selected.map(|p| p.model_match),
        };

        self.optional(AtCommand::set("+CRC", [1i64])).await;
        self.optional(AtCommand::set("+CLIP", [1i64])).await;
        self.optional(AtCommand::set("+CNMI", [2i64, 1])).await;
        let mode = if self.cfg.text_mode { 1i64 } else { 0 };
        self.optional(AtCommand::set("+CMGF", [mode])).await;
        self.optional(AtCommand::set("+CREG", [1i64])).await;

        let catalog = self.refresh_catalog().await?;
        *self.profile.write().unwrap() = Some(profile.clone());
        Ok((profile, catalog))
    }

    async fn unlock_sim(&self) -> Result<(), ServiceError> {
        let state = self.pin_state().await?;
        match state.as_str() {
            "READY" => Ok(()),
            "SIM PIN" => {
                let pin = self
                    .cfg
                    .sim_pin
                    .clone()
                    .ok_or(ServiceError::SimPinRequired)?;
                self.cmd(AtCommand::set("+CPIN", [pin.as_str()]))
                    .await
                    .map_err(|e| match e {
                        ServiceError::Cme(16) => {
                            ServiceError::InitFailed("+CPIN (incorrect PIN)".into())
                        }
                        ServiceError::Cme(12) => ServiceError::SimPuk,
                        _ => ServiceError::InitFailed("+CPIN".into()),
                    })?;
                match self.pin_state().await?.as_str() {
                    "READY" => Ok(()),
                    "SIM PUK" => Err(ServiceError::SimPuk),
                    other => Err(ServiceError::InitFailed(format!("+CPIN ({other})"))),
                }
            }
            "SIM PUK" => Err(ServiceError::SimPuk),
            other => Err(ServiceError::InitFailed(format!("+CPIN ({other})"))),
        }
    }

    async fn pin_state(&self) -> Result<String, ServiceError> {
        let resp = self
            .cmd(AtCommand::read("+CPIN"))
            .await
            .map_err(|e| match e {
                ServiceError::Cme(11) => ServiceError::SimPinRequired,
                ServiceError::Cme(12) => ServiceError::SimPuk,
                _ => ServiceError::InitFailed("+CPIN?".into()),
            })?;
        Ok(resp
            .first("+CPIN")
            .map(|l| l.raw_values.trim().trim_matches('"').to_ascii_uppercase())
            .unwrap_or_else(|| "READY".into()))
    }

    async fn identity(&self, name: &str) -> String {
        match self.cmd(AtCommand::execute(name)).await {
            Ok(r) => r
                .info
                .first()
                .map(|l| l.raw_values.trim().trim_matches('"').to_owned())
                .unwrap_or_default(),
            Err(e) => {
                warn!("{name}: {e}");
                String::new()
            }
        }
    }

    /// Rebuilds the catalog from +CLAC, probing individual commands when the
    /// modem does not support it.
    pub async fn refresh_catalog(&self) -> Result<Arc<CapabilityCatalog>, ServiceError> {
        let catalog = match self.cmd(AtCommand::execute("+CLAC")).await {
            Ok(resp) => {
                let commands: BTreeSet<String> = resp
                    .info
                    .iter()
                    .filter_map(|l| capability::normalize_command(&l.line))
                    .collect();
                CapabilityCatalog::new(commands, CatalogSource::Clac, self.cfg.mms_enabled)
            }
            Err(ServiceError::At(e @ (AtError::TransportClosed | AtError::Timeout(_)))) => {
                return Err(ServiceError::At(e))
            }
            Err(_) => {
                let mut commands: BTreeSet<String> = capability::BASIC_COMMANDS
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                for name in capability::probe_list() {
                    if self.cmd(AtCommand::test(name)).await.is_ok() {
                        commands.insert(name.to_owned());
                    }
                }
                CapabilityCatalog::new(commands, CatalogSource::Probe, self.cfg.mms_enabled)
            }
        };
        let mut catalog = catalog;
        if let Some(q) = self.engine.quirks() {
            catalog.supported_commands.retain(|c| !q.is_unsupported(c));
            catalog.derived_services =
                capability::derive_services(&catalog.supported_commands, self.cfg.mms_enabled);
        }
        let catalog = Arc::new(catalog);
        *self.catalog.write().unwrap() = Some(catalog.clone());
        Ok(catalog)
    }

    pub async fn status(&self) -> ModemStatus {
        let mut st = ModemStatus::default();
        if let Ok(r) = self.cmd(AtCommand::execute("+CSQ")).await {
            if let Some((n, ber)) = r
                .first("+CSQ")
                .and_then(|l| status::parse_csq(&l.raw_values))
            {
                st.signal_n = Some(n);
                st.rssi_dbm = status::rssi_dbm(n);
                st.ber_class = status::ber_class(ber);
            }
        }
        if let Ok(r) = self.cmd(AtCommand::read("+CREG")).await {
            st.registration = r
                .first("+CREG")
                .and_then(|l| status::parse_creg(&l.raw_values, false));
        }
        st
    }

    /// Sends a text, segmenting as needed. Each segment is reported
    /// separately; an error is returned only when nothing was sent.
    pub async fn send_sms(&self, to: &str, text: &str) -> Result<SendReport, ServiceError> {
        self.require(Service::Sms)?;
        let dest: Address = to
            .parse()
            .map_err(|e: SmsError| ServiceError::InvalidArgument(e.to_string()))?;
        if matches!(dest.ton, sms::TypeOfNumber::Alphanumeric) {
            return Err(ServiceError::InvalidArgument(
                "cannot send to an alphanumeric address".into(),
            ));
        }
        if self.cfg.text_mode {
            return self.send_sms_text_mode(&dest, text).await;
        }
        let reference = self.concat_ref.fetch_add(1, Ordering::Relaxed);
        let parts = sms::build_submits(&dest, text, reference, self.cfg.validity_relative)?;
        let multipart = parts.len() > 1;
        let mut segments = Vec::with_capacity(parts.len());
        let mut plain_error = false;
        for (index, (hex, len)) in parts.into_iter().enumerate() {
            let cmd = AtCommand::set("+CMGS", [len]).with_prompt();
            let result = self
                .engine
                .execute_with_payload(cmd, Payload::Data(hex.into_bytes()))
                .await
                .map_err(ServiceError::from)
                .and_then(|r| check(r, "+CMGS"));
            segments.push(match result {
                Ok(r) => SegmentResult {
                    index,
                    message_ref: r
                        .first("+CMGS")
                        .and_then(|l| l.raw_values.split(',').next()?.trim().parse().ok()),
                    error: None,
                },
                Err(e) => {
                    plain_error |= matches!(
                        e,
                        ServiceError::CommandFailed(_) | ServiceError::At(AtError::Unsupported(_))
                    );
                    SegmentResult {
                        index,
                        message_ref: None,
                        error: Some(e.to_string()),
                    }
                }
            });
        }
        let report = SendReport {
            segments,
            concat_ref: multipart.then_some(reference),
        };
        if report.segments.iter().all(|s| s.error.is_some()) {
            if plain_error {
                // a bare ERROR may mean the command vanished; re-discover
                if let Ok(c) = self.refresh_catalog().await {
                    if !c.offers(Service::Sms) {
                        return Err(ServiceError::Unavailable(Service::Sms));
                    }
                }
            }
            if report.segments.len() == 1 {
                let err = report.segments[0].error.clone().unwrap_or_default();
                if let Some(code) = err
                    .strip_prefix("+CMS ERROR: ")
                    .and_then(|c| c.parse().ok())
                {
                    return Err(ServiceError::Cms(code));
                }
            }
            return Err(ServiceError::SendFailed(report));
        }
        Ok(report)
    }

    async fn send_sms_text_mode(
        &self,
        dest: &Address,
        text: &str,
    ) -> Result<SendReport, ServiceError> {
        if !sms::gsm7::is_gsm7(text) || text.chars().count() > sms::pdu::MAX_GSM7_SEPTETS {
            return Err(ServiceError::InvalidArgument(
                "text mode sends single GSM 7-bit messages only".into(),
            ));
        }
        let cmd = AtCommand::set("+CMGS", [dest.to_string()]).with_prompt();
        let r = self
            .engine
            .execute_with_payload(cmd, Payload::Data(text.as_bytes().to_vec()))
            .await?;
        let r = check(r, "+CMGS")?;
        Ok(SendReport {
            segments: vec![SegmentResult {
                index: 0,
                message_ref: r
                    .first("+CMGS")
                    .and_then(|l| l.raw_values.trim().parse().ok()),
                error: None,
            }],
            concat_ref: None,
        })
    }

    /// Raw APDU passthrough via +CSIM. Input and output are hex strings.
    pub async fn sim_apdu(&self, apdu_hex: &str) -> Result<String, ServiceError> {
        self.require(Service::SimAccess)?;
        let apdu = apdu_hex.trim();
        if apdu.is_empty()
            || !apdu.len().is_multiple_of(2)
            || !apdu.chars().all(|c| c.is_ascii_hexdigit())
        {
            return Err(ServiceError::InvalidArgument(
                "APDU must be non-empty even-length hex".into(),
            ));
        }
        let apdu = apdu.to_ascii_uppercase();
        let r = self
            .cmd(AtCommand::set(
                "+CSIM",
                [crate::at::Arg::Int(apdu.len() as i64), apdu.into()],
            ))
            .await?;
        let line = r
            .first("+CSIM")
            .ok_or_else(|| ServiceError::CommandFailed("+CSIM (no response)".into()))?;
        let resp = line
            .raw_values
            .split_once(',')
            .map(|(_, h)| h.trim().trim_matches('"').to_owned())
            .unwrap_or_default();
        Ok(resp)
    }

    fn on_urc(&self, urc: Urc) {
        match urc.prefix.as_str() {
            "+CMTI" => {
                let Some((storage, index)) = messages::parse_cmti(&urc.payload) else {
                    warn!("unparseable +CMTI: {}", urc.payload);
                    return;
                };
                let Some(me) = self.arc() else { return };
                tokio::spawn(async move {
                    match me.fetch_message(&storage, index).await {
                        Ok(m) => me.deliver_received(m),
                        Err(e) => warn!(storage, index, "fetching indicated message: {e}"),
                    }
                });
            }
            "+CMT" => {
                let pdu = urc.payload.lines().nth(1).unwrap_or("").trim().to_owned();
                match sms::decode(&pdu) {
                    Ok(decoded) => self.deliver_received(StoredSms {
                        storage: None,
                        index: None,
                        status: messages::MessageStatus::ReceivedUnread,
                        pdu: decoded,
                    }),
                    Err(e) => warn!("undecodable +CMT PDU: {e}"),
                }
            }
            "+CREG" => {
                if let Some(r) = status::parse_creg(&urc.payload, true) {
                    self.emit(ServiceEvent::Registration { registration: r });
                }
            }
            _ => {}
        }
    }
}
