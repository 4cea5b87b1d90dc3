use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::oracle::Submit;

/// Every command the simulator implements, as listed by +CLAC.
pub const ALL_COMMANDS: &[&str] = &[
    "A", "D", "E", "H", "+CHUP", "+CPIN", "+CMEE", "+CGMI", "+CGMM", "+CSQ", "+CREG", "+CRC",
    "+CLIP", "+CNMI", "+CMGF", "+CMGS", "+CMGR", "+CMGL", "+CMGD", "+CPMS", "+CPBS", "+CPBR",
    "+CPBW", "+CPBF", "+CSIM", "+CRSM", "+CLAC", "+CSTA",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ToneConfig {
    pub frequency_hz: f64,
    pub duration_ms: u64,
    pub amplitude: i16,
}

impl Default for ToneConfig {
    fn default() -> Self {
        ToneConfig {
            frequency_hz: 440.0,
            duration_ms: 3000,
            amplitude: 8000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DialOutcome {
    #[default]
    Answer,
    Busy,
    NoAnswer,
    NoCarrier,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub manufacturer: String,
    pub model: String,
    pub pin: String,
    pub pin_locked: bool,
    pub sms_capacity: u32,
    pub phonebook_capacity: u32,
    pub number_len: u32,
    pub text_len: u32,
    pub ring_interval_ms: u64,
    pub dial_delay_ms: u64,
    pub tone: ToneConfig,
    /// Network time at startup. Unset means wall-clock time; when set, the
    /// clock advances with tokio time, so a paused runtime freezes it.
    pub clock_base: Option<chrono::DateTime<chrono::Utc>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            manufacturer: "SIMCOM_LTD".into(),
            model: "SIMCOM_SIM800".into(),
            pin: "0000".into(),
            pin_locked: false,
            sms_capacity: 10,
            phonebook_capacity: 250,
            number_len: 40,
            text_len: 18,
            ring_interval_ms: 2000,
            dial_delay_ms: 500,
            tone: ToneConfig::default(),
            clock_base: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinState {
    Ready,
    SimPin,
    SimPuk,
}

#[derive(Debug, Clone, Serialize)]
pub struct Pin {
    #[serde(skip)]
    pub code: String,
    pub state: PinState,
    pub attempts_left: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoredPdu {
    pub pdu_hex: String,
    /// +CMGL stat: 0 unread, 1 read, 2 unsent, 3 sent.
    pub stat: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmsStore {
    pub capacity: u32,
    pub entries: BTreeMap<u32, StoredPdu>,
}

impl SmsStore {
    fn new(capacity: u32) -> Self {
        SmsStore {
            capacity,
            entries: BTreeMap::new(),
        }
    }

    pub fn free_index(&self) -> Option<u32> {
        (1..=self.capacity).find(|i| !self.entries.contains_key(i))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PbEntry {
    pub number: String,
    pub ton: u8,
    pub text: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Phonebook {
    pub capacity: u32,
    pub entries: BTreeMap<u32, PbEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CallDir {
    Incoming,
    Outgoing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimCallState {
    Ringing,
    Dialing,
    Active,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimCall {
    /// Increments per call; lets timers notice their call has gone.
    pub generation: u64,
    pub peer: String,
    pub direction: CallDir,
    pub state: SimCallState,
    pub rings: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmitRecord {
    pub pdu: String,
    pub mode: &'static str,
    pub decoded: Option<Submit>,
    pub message_ref: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimState {
    #[serde(skip)]
    pub cfg: SimConfig,
    pub echo: bool,
    pub cmee: u8,
    pub pin: Pin,
    pub creg_mode: u8,
    pub registration: u8,
    pub signal_n: u8,
    pub ber: u8,
    pub crc: bool,
    pub clip: bool,
    pub cnmi: (u8, u8),
    pub cmgf: u8,
    pub csta: u8,
    pub sms_storage: String,
    pub sms: BTreeMap<String, SmsStore>,
    pub pb_storage: String,
    pub phonebook: BTreeMap<String, Phonebook>,
    pub capabilities: BTreeSet<String>,
    #[serde(skip)]
    pub apdu_table: HashMap<String, String>,
    pub call: Option<SimCall>,
    pub dial_outcome: DialOutcome,
    pub tone: ToneConfig,
    pub submits: Vec<SubmitRecord>,
    pub next_mr: u8,
    pub generation: u64,
}

impl SimState {
    pub fn new(cfg: SimConfig) -> Self {
        let pb = |cap| Phonebook {
            capacity: cap,
            entries: BTreeMap::new(),
        };
        SimState {
            echo: true,
            cmee: 0,
            pin: Pin {
                code: cfg.pin.clone(),
                state: if cfg.pin_locked {
                    PinState::SimPin
                } else {
                    PinState::Ready
                },
                attempts_left: 3,
            },
            creg_mode: 0,
            registration: 1,
            signal_n: 18,
            ber: 99,
            crc: false,
            clip: false,
            cnmi: (2, 1),
            cmgf: 0,
            csta: 129,
            sms_storage: "SM".into(),
            sms: [
                ("SM", SmsStore::new(cfg.sms_capacity)),
                ("ME", SmsStore::new(cfg.sms_capacity)),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
            pb_storage: "SM".into(),
            phonebook: [
                ("SM", pb(cfg.phonebook_capacity)),
                ("ME", pb(cfg.phonebook_capacity)),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
            capabilities: ALL_COMMANDS.iter().map(|s| s.to_string()).collect(),
            apdu_table: HashMap::new(),
            call: None,
            dial_outcome: DialOutcome::Answer,
            tone: cfg.tone.clone(),
            submits: Vec::new(),
            next_mr: 0,
            generation: 0,
            cfg,
        }
    }

    pub fn is_registered(&self) -> bool {
        matches!(self.registration, 1 | 5)
    }

    pub fn new_call(&mut self, peer: &str, direction: CallDir, state: SimCallState) -> u64 {
        self.generation += 1;
        self.call = Some(SimCall {
            generation: self.generation,
            peer: peer.to_owned(),
            direction,
            state,
            rings: 0,
        });
        self.generation
    }

    pub fn call_in(&self, generation: u64, state: SimCallState) -> bool {
        self.call
            .as_ref()
            .is_some_and(|c| c.generation == generation && c.state == state)
    }
}
