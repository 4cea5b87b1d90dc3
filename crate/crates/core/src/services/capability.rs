use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Service {
    Sms,
    Mms,
    Voice,
    Phonebook,
    SimAccess,
}

impl Service {
    pub fn name(self) -> &'static str {
        match self {
            Service::Sms => "sms",
            Service::Mms => "mms",
            Service::Voice => "voice",
            Service::Phonebook => "phonebook",
            Service::SimAccess => "sim_access",
        }
    }
}

/// Commands each service needs. A service is offered only when every listed
/// command is supported. MMS rides on HTTP and needs none.
pub const DERIVATION: &[(Service, &[&str])] = &[
    (Service::Sms, &["+CMGS", "+CMGR", "+CMGL", "+CMGD"]),
    (Service::Voice, &["D", "A", "+CHUP"]),
    (Service::Phonebook, &["+CPBS", "+CPBR", "+CPBW", "+CPBF"]),
    (Service::SimAccess, &["+CSIM"]),
];

/// V.250 basic commands every DCE implements; assumed present when the
/// catalog had to be probed.
pub const BASIC_COMMANDS: &[&str] = &["A", "D", "E", "H"];

/// Extended commands probed with `=?` when +CLAC is unavailable.
pub fn probe_list() -> Vec<&'static str> {
    let mut v: BTreeSet<&str> = DERIVATION
        .iter()
        .flat_map(|(_, cmds)| cmds.iter().copied())
        .filter(|c| c.starts_with('+'))
        .collect();
    v.extend([
        "+CLIP", "+CRC", "+CNMI", "+CMGF", "+CPMS", "+CRSM", "+CSQ", "+CREG",
    ]);
    v.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogSource {
    Clac,
    Probe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityCatalog {
    pub supported_commands: BTreeSet<String>,
    pub derived_services: BTreeSet<Service>,
    pub source: CatalogSource,
}

impl CapabilityCatalog {
    pub fn new(commands: BTreeSet<String>, source: CatalogSource, mms: bool) -> Self {
        let derived_services = derive_services(&commands, mms);
        CapabilityCatalog {
            supported_commands: commands,
            derived_services,
            source,
        }
    }

    pub fn supports(&self, command: &str) -> bool {
        self.supported_commands
            .contains(&command.to_ascii_uppercase())
    }

    pub fn offers(&self, service: Service) -> bool {
        self.derived_services.contains(&service)
    }
}

pub fn derive_services(commands: &BTreeSet<String>, mms: bool) -> BTreeSet<Service> {
    let mut out: BTreeSet<Service> = DERIVATION
        .iter()
        .filter(|(_, needed)| needed.iter().all(|c| commands.contains(*c)))
        .map(|(s, _)| *s)
        .collect();
    if mms {
        out.insert(Service::Mms);
    }
    out
}

/// Normalises one +CLAC line (`AT+CMGS`, `+CMGS`, `ATD`) to a command name.
pub fn normalize_command(line: &str) -> Option<String> {
    let s = line.trim();
    let s = if s.len() >= 2 && s.as_bytes()[..2].eq_ignore_ascii_case(b"AT") {
        &s[2..]
    } else {
        s
    };
    let s = s.trim_end_matches(['=', '?']);
    if s.is_empty() || !s.chars().all(|c| c.is_ascii_graphic()) {
        return None;
    }
    Some(s.to_ascii_uppercase())
}
