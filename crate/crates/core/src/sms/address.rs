use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::gsm7;
use super::SmsError;

pub const MAX_DIGITS: usize = 20;
pub const MAX_ALPHANUMERIC: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeOfNumber {
    Unknown,
    International,
    National,
    Alphanumeric,
}

impl TypeOfNumber {
    fn code(self) -> u8 {
        match self {
            TypeOfNumber::Unknown => 0,
            TypeOfNumber::International => 1,
            TypeOfNumber::National => 2,
            TypeOfNumber::Alphanumeric => 5,
        }
    }

    fn from_code(code: u8) -> Self {
        match code {
            1 => TypeOfNumber::International,
            2 => TypeOfNumber::National,
            5 => TypeOfNumber::Alphanumeric,
            _ => TypeOfNumber::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumberingPlan {
    Unknown,
    Isdn,
}

/// A TP address: type of number, numbering plan and the digits (without any
/// leading `+`), or GSM text when alphanumeric.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Address {
    pub ton: TypeOfNumber,
    pub npi: NumberingPlan,
    pub digits: String,
}

impl Address {
    pub fn international(digits: impl Into<String>) -> Self {
        Address {
            ton: TypeOfNumber::International,
            npi: NumberingPlan::Isdn,
            digits: digits.into(),
        }
    }

    pub fn unknown() -> Self {
        Address {
            ton: TypeOfNumber::Unknown,
            npi: NumberingPlan::Unknown,
            digits: String::new(),
        }
    }

    /// Type-of-address octet (bit 7 always set).
    pub fn type_octet(&self) -> u8 {
        let npi = match self.npi {
            NumberingPlan::Unknown => 0,
            NumberingPlan::Isdn => 1,
        };
        0x80 | (self.ton.code() << 4) | npi
    }

    pub fn from_type_octet(toa: u8, digits: String) -> Self {
        let npi = if toa & 0x0F == 1 {
            NumberingPlan::Isdn
        } else {
            NumberingPlan::Unknown
        };
        Address {
            ton: TypeOfNumber::from_code((toa >> 4) & 0x07),
            npi,
            digits,
        }
    }

    pub fn validate(&self) -> Result<(), SmsError> {
        match self.ton {
            TypeOfNumber::Alphanumeric => {
                let codes = gsm7::encode_septets(&self.digits)?;
                if codes.len() > MAX_ALPHANUMERIC {
                    return Err(SmsError::InvalidAddress(self.digits.clone()));
                }
            }
            _ => {
                if self.digits.len() > MAX_DIGITS {
                    return Err(SmsError::InvalidAddress(self.digits.clone()));
                }
                if let Some(c) = self.digits.chars().find(|c| !is_dial_digit(*c)) {
                    return Err(SmsError::InvalidDigit(c));
                }
            }
        }
        Ok(())
    }

    /// Address field as it appears in a TPDU: length, type octet, value.
    /// The length counts digits, or useful semi-octets for alphanumeric.
    pub fn encode_tp(&self) -> Result<Vec<u8>, SmsError> {
        self.validate()?;
        let mut out = Vec::with_capacity(12);
        if self.ton == TypeOfNumber::Alphanumeric {
            let codes = gsm7::encode_septets(&self.digits)?;
            let packed = gsm7::pack_septets(&codes, 0);
            out.push((codes.len() * 7).div_ceil(4) as u8);
            out.push(self.type_octet());
            out.extend_from_slice(&packed);
        } else {
            out.push(self.digits.len() as u8);
            out.push(self.type_octet());
            out.extend(encode_semi_octets(&self.digits)?);
        }
        Ok(out)
    }

    /// Decodes a TP address starting at `buf[0]`; returns the address and the
    /// number of octets consumed.
    pub fn decode_tp(buf: &[u8]) -> Result<(Address, usize), SmsError> {
        let len = *buf.first().ok_or(SmsError::TruncatedPdu)? as usize;
        let toa = *buf.get(1).ok_or(SmsError::TruncatedPdu)?;
        let octets = len.div_ceil(2);
        let value = buf.get(2..2 + octets).ok_or(SmsError::TruncatedPdu)?;
        let digits = if (toa >> 4) & 0x07 == 5 {
            let mut codes = gsm7::unpack_septets(value, len * 4 / 7, 0);
            // senders that count whole octets leave a zero septet of padding
            if codes.len() * 7 == octets * 8 && codes.last() == Some(&0) {
                codes.pop();
            }
            gsm7::decode_septets(&codes)
        } else {
            let mut d = decode_semi_octets(value);
            d.truncate(len);
            d
        };
        Ok((Address::from_type_octet(toa, digits), 2 + octets))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ton == TypeOfNumber::International {
            write!(f, "+{}", self.digits)
        } else {
            f.write_str(&self.digits)
        }
    }
}

impl FromStr for Address {
    type Err = SmsError;

    /// `+` prefix means international/ISDN; plain digits are unknown/ISDN;
    /// anything else short enough is an alphanumeric sender.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(SmsError::InvalidAddress(s.to_owned()));
        }
        let addr = if let Some(rest) = s.strip_prefix('+') {
            if rest.is_empty() || rest.contains('+') {
                return Err(SmsError::InvalidAddress(s.to_owned()));
            }
            Address::international(rest)
        } else if s.chars().all(is_dial_digit) {
            Address {
                ton: TypeOfNumber::Unknown,
                npi: NumberingPlan::Isdn,
                digits: s.to_owned(),
            }
        } else if s.contains('+') {
            return Err(SmsError::InvalidAddress(s.to_owned()));
        } else {
            Address {
                ton: TypeOfNumber::Alphanumeric,
                npi: NumberingPlan::Unknown,
                digits: s.to_owned(),
            }
        };
        addr.validate()?;
        Ok(addr)
    }
}

fn is_dial_digit(c: char) -> bool {
    c.is_ascii_digit() || c == '*' || c == '#'
}

fn digit_nibble(c: char) -> Result<u8, SmsError> {
    match c {
        '0'..='9' => Ok(c as u8 - b'0'),
        '*' => Ok(0x0A),
        '#' => Ok(0x0B),
        _ => Err(SmsError::InvalidDigit(c)),
    }
}

fn nibble_digit(n: u8) -> Option<char> {
    match n {
        0..=9 => Some((b'0' + n) as char),
        0x0A => Some('*'),
        0x0B => Some('#'),
        0x0C => Some('a'),
        0x0D => Some('b'),
        0x0E => Some('c'),
        _ => None,
    }
}

/// Swapped-nibble BCD. Odd lengths pad the last high nibble with 0xF.
pub fn encode_semi_octets(digits: &str) -> Result<Vec<u8>, SmsError> {
    let nibbles = digits
        .chars()
        .map(digit_nibble)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(nibbles
        .chunks(2)
        .map(|pair| pair[0] | (pair.get(1).copied().unwrap_or(0x0F) << 4))
        .collect())
}

/// Inverse of [`encode_semi_octets`]; stops at the first 0xF filler.
pub fn decode_semi_octets(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        for n in [b & 0x0F, b >> 4] {
            match nibble_digit(n) {
                Some(c) => out.push(c),
                None => return out,
            }
        }
    }
    out
}
