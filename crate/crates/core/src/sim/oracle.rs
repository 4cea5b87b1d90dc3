//! The simulator's own SMS codec. It shares no code with `crate::sms` so the
//! two can check each other: the sim encodes DELIVERs the gateway decodes,
//! and decodes the SUBMITs the gateway encodes.

use std::fmt::Write as _;

/// GSM 03.38 default alphabet, one char per code point 0x00..0x7F. Code
/// 0x1B (escape) is a placeholder space here.
const BASIC: [char; 128] = [
    '@', '£', '$', '¥', 'è', 'é', 'ù', 'ì', 'ò', 'Ç', '\n', 'Ø', 'ø', '\r', 'Å', 'å', //
    'Δ', '_', 'Φ', 'Γ', 'Λ', 'Ω', 'Π', 'Ψ', 'Σ', 'Θ', 'Ξ', ' ', 'Æ', 'æ', 'ß', 'É', //
    ' ', '!', '"', '#', '¤', '%', '&', '\'', '(', ')', '*', '+', ',', '-', '.', '/', //
    '0', '1', '2', '3', '4', '5', '6', '7', '8', '9', ':', ';', '<', '=', '>', '?', //
    '¡', 'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J', 'K', 'L', 'M', 'N', 'O', //
    'P', 'Q', 'R', 'S', 'T', 'U', 'V', 'W', 'X', 'Y', 'Z', 'Ä', 'Ö', 'Ñ', 'Ü', '§', //
    '¿', 'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', //
    'p', 'q', 'r', 's', 't', 'u', 'v', 'w', 'x', 'y', 'z', 'ä', 'ö', 'ñ', 'ü', 'à', //
];

fn ext_code(c: char) -> Option<u8> {
    Some(match c {
        '\u{000C}' => 0x0A,
        '^' => 0x14,
        '{' => 0x28,
        '}' => 0x29,
        '\\' => 0x2F,
        '[' => 0x3C,
        '~' => 0x3D,
        ']' => 0x3E,
        '|' => 0x40,
        '€' => 0x65,
        _ => return None,
    })
}

fn ext_char(code: u8) -> Option<char> {
    ['\u{000C}', '^', '{', '}', '\\', '[', '~', ']', '|', '€']
        .into_iter()
        .find(|&c| ext_code(c) == Some(code))
}

fn to_septets(text: &str) -> Option<Vec<u8>> {
    let mut out = Vec::new();
    for c in text.chars() {
        if let Some(e) = ext_code(c) {
            out.push(0x1B);
            out.push(e);
        } else if c == ' ' {
            out.push(0x20);
        } else {
            let pos = BASIC.iter().position(|&b| b == c)?;
            if pos == 0x1B {
                return None;
            }
            out.push(pos as u8);
        }
    }
    Some(out)
}

fn from_septets(septets: &[u8]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < septets.len() {
        let s = septets[i] & 0x7F;
        if s == 0x1B {
            if let Some(&n) = septets.get(i + 1) {
                out.push(ext_char(n).unwrap_or(' '));
                i += 2;
                continue;
            }
            out.push(' ');
        } else {
            out.push(BASIC[s as usize]);
        }
        i += 1;
    }
    out
}

pub fn is_gsm(text: &str) -> bool {
    to_septets(text).is_some()
}

/// Packs septets through a bit accumulator, starting `skip_bits` into the
/// first octet (fill after a UDH).
fn pack(septets: &[u8], skip_bits: u32) -> Vec<u8> {
    let mut out = Vec::new();
    let mut acc: u32 = 0;
    let mut nbits: u32 = skip_bits;
    for &s in septets {
        acc |= ((s & 0x7F) as u32) << nbits;
        nbits += 7;
        while nbits >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            nbits -= 8;
        }
    }
    if nbits > 0 {
        out.push(acc as u8);
    }
    out
}

fn unpack(octets: &[u8], count: usize, skip_bits: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(count);
    let mut acc: u32 = 0;
    let mut nbits: u32 = 0;
    let mut iter = octets.iter();
    let mut to_skip = skip_bits;
    while out.len() < count {
        while nbits < 7 + to_skip {
            match iter.next() {
                Some(&b) => {
                    acc |= (b as u32) << nbits;
                    nbits += 8;
                }
                None => return out,
            }
        }
        if to_skip > 0 {
            acc >>= to_skip;
            nbits -= to_skip;
            to_skip = 0;
        }
        out.push((acc & 0x7F) as u8);
        acc >>= 7;
        nbits -= 7;
    }
    out
}

fn swap_digits(number: &str) -> Vec<u8> {
    let nibble = |c: char| match c {
        '0'..='9' => c as u8 - b'0',
        '*' => 10,
        '#' => 11,
        _ => 15,
    };
    let digits: Vec<u8> = number.chars().map(nibble).collect();
    digits
        .chunks(2)
        .map(|p| p[0] | (p.get(1).copied().unwrap_or(15) << 4))
        .collect()
}

fn unswap_digits(bytes: &[u8], count: usize) -> String {
    let mut s = String::new();
    for b in bytes {
        for n in [b & 0x0F, b >> 4] {
            if s.len() == count {
                return s;
            }
            s.push(match n {
                0..=9 => (b'0' + n) as char,
                10 => '*',
                11 => '#',
                _ => return s,
            });
        }
    }
    s
}

/// Address field: digit count, TOA, swapped digits.
fn address(number: &str) -> Vec<u8> {
    let (toa, digits) = match number.strip_prefix('+') {
        Some(d) => (0x91u8, d),
        None => (0x81u8, number),
    };
    let mut v = vec![digits.len() as u8, toa];
    v.extend(swap_digits(digits));
    v
}

fn bcd(v: u8) -> u8 {
    ((v % 10) << 4) | (v / 10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timestamp {
    pub year: u8,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
    pub quarter_hours: i8,
}

impl Timestamp {
    pub fn now() -> Self {
        Self::at(chrono::Utc::now())
    }

    pub fn at(t: chrono::DateTime<chrono::Utc>) -> Self {
        use chrono::{Datelike, Timelike};
        Timestamp {
            year: (t.year() % 100) as u8,
            month: t.month() as u8,
            day: t.day() as u8,
            hour: t.hour() as u8,
            minute: t.minute() as u8,
            second: t.second() as u8,
            quarter_hours: 0,
        }
    }

    fn octets(&self) -> [u8; 7] {
        let q = self.quarter_hours.unsigned_abs();
        let mut tz = bcd(q);
        if self.quarter_hours < 0 {
            tz |= 0x08;
        }
        [
            bcd(self.year),
            bcd(self.month),
            bcd(self.day),
            bcd(self.hour),
            bcd(self.minute),
            bcd(self.second),
            tz,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concat {
    pub reference: u8,
    pub total: u8,
    pub seq: u8,
}

/// Builds an SMS-DELIVER as hex with an empty SMSC prefix. Texts outside the
/// GSM alphabet go out as UCS-2.
pub fn deliver_hex(from: &str, text: &str, ts: Timestamp, concat: Option<&Concat>) -> String {
    let mut pdu = vec![0x00u8];
    let mut first = 0x04u8; // MTI deliver, no more messages to send
    if concat.is_some() {
        first |= 0x40;
    }
    pdu.push(first);
    if from.chars().all(|c| c.is_ascii_digit() || c == '+') {
        pdu.extend(address(from));
    } else {
        // alphanumeric sender
        let septets = to_septets(from).unwrap_or_default();
        let packed = pack(&septets, 0);
        pdu.push((packed.len() * 2) as u8);
        pdu.push(0xD0);
        pdu.extend(packed);
    }
    pdu.push(0x00);
    let udh: Vec<u8> = concat
        .map(|c| vec![0x05, 0x00, 0x03, c.reference, c.total, c.seq])
        .unwrap_or_default();
    match to_septets(text) {
        Some(septets) => {
            pdu.push(0x00);
            pdu.extend(ts.octets());
            if udh.is_empty() {
                pdu.push(septets.len() as u8);
                pdu.extend(pack(&septets, 0));
            } else {
                let udh_bits = udh.len() as u32 * 8;
                let fill = (7 - udh_bits % 7) % 7;
                let header_septets = (udh_bits + fill) / 7;
                pdu.push((header_septets as usize + septets.len()) as u8);
                let mut body = udh.clone();
                body.extend(pack(&septets, fill));
                pdu.extend(body);
            }
        }
        None => {
            pdu.push(0x08);
            pdu.extend(ts.octets());
            let mut ud = udh;
            for unit in text.encode_utf16() {
                ud.extend(unit.to_be_bytes());
            }
            pdu.push(ud.len() as u8);
            pdu.extend(ud);
        }
    }
    let mut hex = String::with_capacity(pdu.len() * 2);
    for b in pdu {
        let _ = write!(hex, "{b:02X}");
    }
    hex
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Submit {
    pub message_ref: u8,
    pub destination: String,
    pub dcs: u8,
    pub validity: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concat: Option<(u8, u8, u8)>,
    pub text: String,
    /// TPDU length, excluding the SMSC field.
    pub tpdu_len: usize,
}

fn from_hex(s: &str) -> Option<Vec<u8>> {
    let s = s.trim();
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}

/// Parses an SMS-SUBMIT with a leading SMSC field.
pub fn parse_submit(hex: &str) -> Option<Submit> {
    let bytes = from_hex(hex)?;
    let smsc_len = *bytes.first()? as usize;
    let t = bytes.get(1 + smsc_len..)?;
    let tpdu_len = t.len();
    let first = *t.first()?;
    if first & 0x03 != 0x01 {
        return None;
    }
    let message_ref = *t.get(1)?;
    let ndigits = *t.get(2)? as usize;
    let toa = *t.get(3)?;
    let addr_octets = ndigits.div_ceil(2);
    let mut p = 4;
    let digits = unswap_digits(t.get(p..p + addr_octets)?, ndigits);
    p += addr_octets;
    let destination = if toa == 0x91 {
        format!("+{digits}")
    } else {
        digits
    };
    let _pid = *t.get(p)?;
    let dcs = *t.get(p + 1)?;
    p += 2;
    let validity = match (first >> 3) & 0x03 {
        0 => None,
        2 => {
            p += 1;
            Some(*t.get(p - 1)?)
        }
        _ => {
            p += 7;
            None
        }
    };
    let udl = *t.get(p)? as usize;
    p += 1;
    let ud = t.get(p..)?;
    let mut concat = None;
    let mut header_len = 0usize;
    if first & 0x40 != 0 {
        let udhl = *ud.first()? as usize;
        header_len = udhl + 1;
        let ies = ud.get(1..header_len)?;
        let mut i = 0;
        while i + 1 < ies.len() {
            let (iei, len) = (ies[i], ies[i + 1] as usize);
            let data = ies.get(i + 2..i + 2 + len)?;
            match (iei, len) {
                (0x00, 3) => concat = Some((data[0], data[1], data[2])),
                (0x08, 4) => concat = Some((data[1], data[2], data[3])),
                _ => {}
            }
            i += 2 + len;
        }
    }
    let text = match dcs & 0x0C {
        0x00 => {
            let header_bits = (header_len * 8) as u32;
            let fill = (7 - header_bits % 7) % 7;
            let header_septets = ((header_bits + fill) / 7) as usize;
            let n = udl.checked_sub(header_septets)?;
            let septets = unpack(ud.get(header_len..)?, n, fill);
            if septets.len() != n {
                return None;
            }
            from_septets(&septets)
        }
        0x08 => {
            let body = ud.get(header_len..udl)?;
            let units: Vec<u16> = body
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect();
            String::from_utf16(&units).ok()?
        }
        _ => return None,
    };
    Some(Submit {
        message_ref,
        destination,
        dcs,
        validity,
        concat,
        text,
        tpdu_len,
    })
}
