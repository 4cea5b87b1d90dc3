use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Registration {
    NotRegistered,
    RegisteredHome,
    Searching,
    Denied,
    Unknown,
    RegisteredRoaming,
}

impl Registration {
    /// `<stat>` of +CREG.
    pub fn from_stat(stat: u8) -> Option<Self> {
        use Registration::*;
        Some(match stat {
            0 => NotRegistered,
            1 => RegisteredHome,
            2 => Searching,
            3 => Denied,
            4 => Unknown,
            5 => RegisteredRoaming,
            _ => return None,
        })
    }

    pub fn stat(self) -> u8 {
        self as u8
    }

    pub fn is_registered(self) -> bool {
        matches!(
            self,
            Registration::RegisteredHome | Registration::RegisteredRoaming
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModemStatus {
    pub registration: Option<Registration>,
    pub rssi_dbm: Option<i32>,
    pub ber_class: Option<u8>,
    /// Raw +CSQ `<rssi>` as reported.
    pub signal_n: Option<u8>,
}

/// `+CSQ` `<rssi>` to dBm: n in 0..=31 maps to -113 + 2n; 99 and anything
/// out of range is "not known".
pub fn rssi_dbm(n: u8) -> Option<i32> {
    (n <= 31).then(|| -113 + 2 * n as i32)
}

pub fn ber_class(ber: u8) -> Option<u8> {
    (ber <= 7).then_some(ber)
}

/// Parses the values of `+CSQ: <rssi>,<ber>`.
pub fn parse_csq(values: &str) -> Option<(u8, u8)> {
    let mut it = values.split(',').map(|v| v.trim().parse::<u8>());
    match (it.next(), it.next()) {
        (Some(Ok(n)), Some(Ok(b))) => Some((n, b)),
        _ => None,
    }
}

/// `<stat>` from a +CREG read response (`<n>,<stat>[,...]`) or an
/// unsolicited `+CREG: <stat>[,...]`.
pub fn parse_creg(values: &str, unsolicited: bool) -> Option<Registration> {
    let idx = if unsolicited { 0 } else { 1 };
    let field = values.split(',').nth(idx)?.trim();
    Registration::from_stat(field.parse().ok()?)
}
