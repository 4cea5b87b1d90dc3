//! SMS-SUBMIT and SMS-DELIVER TPDUs in the hex form exchanged in PDU mode.

use serde::{Deserialize, Serialize};

use super::address::Address;
use super::gsm7;
use super::SmsError;

/// Largest TPDU accepted for submission.
pub const MAX_TPDU_LEN: usize = 175;
/// Maximum user data octets in one TPDU.
pub const MAX_UD_OCTETS: usize = 140;
pub const MAX_GSM7_SEPTETS: usize = 160;
pub const MAX_UCS2_UNITS: usize = 70;

const MTI_DELIVER: u8 = 0x00;
const MTI_SUBMIT: u8 = 0x01;
const UDHI: u8 = 0x40;
const VPF_RELATIVE: u8 = 0x10;
const IEI_CONCAT_8BIT: u8 = 0x00;
const IEI_CONCAT_16BIT: u8 = 0x08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alphabet {
    Gsm7,
    Ucs2,
    Octet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataCodingScheme {
    pub alphabet: Alphabet,
}

impl DataCodingScheme {
    pub const GSM7: Self = DataCodingScheme {
        alphabet: Alphabet::Gsm7,
    };
    pub const UCS2: Self = DataCodingScheme {
        alphabet: Alphabet::Ucs2,
    };
    pub const OCTET: Self = DataCodingScheme {
        alphabet: Alphabet::Octet,
    };

    pub fn to_octet(self) -> u8 {
        match self.alphabet {
            Alphabet::Gsm7 => 0x00,
            Alphabet::Octet => 0x04,
            Alphabet::Ucs2 => 0x08,
        }
    }

    /// Accepts the general data coding group (uncompressed), the message
    /// waiting groups and the data coding/message class group.
    pub fn from_octet(dcs: u8) -> Result<Self, SmsError> {
        let alphabet = match dcs >> 4 {
            0x0..=0x3 => {
                if dcs & 0x20 != 0 {
                    return Err(SmsError::UnsupportedDcs(dcs));
                }
                match (dcs >> 2) & 0x03 {
                    0 => Alphabet::Gsm7,
                    1 => Alphabet::Octet,
                    2 => Alphabet::Ucs2,
                    _ => return Err(SmsError::UnsupportedDcs(dcs)),
                }
            }
            0xC | 0xD => Alphabet::Gsm7,
            0xE => Alphabet::Ucs2,
            0xF => {
                if dcs & 0x04 != 0 {
                    Alphabet::Octet
                } else {
                    Alphabet::Gsm7
                }
            }
            _ => return Err(SmsError::UnsupportedDcs(dcs)),
        };
        Ok(DataCodingScheme { alphabet })
    }
}

/// Concatenation information element (8-bit reference).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcatHeader {
    #[serde(rename = "ref")]
    pub reference: u8,
    pub total: u8,
    pub seq: u8,
}

impl ConcatHeader {
    pub fn validate(&self) -> Result<(), SmsError> {
        if self.total == 0 || self.seq == 0 || self.seq > self.total {
            return Err(SmsError::InvalidConcat);
        }
        Ok(())
    }

    fn to_udh(self) -> [u8; 6] {
        [5, IEI_CONCAT_8BIT, 3, self.reference, self.total, self.seq]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserData {
    Text(String),
    Binary(#[serde(with = "hex_bytes")] Vec<u8>),
}

impl UserData {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            UserData::Text(t) => Some(t),
            UserData::Binary(_) => None,
        }
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode_upper(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// Service centre time stamp; `tz_quarters` is the signed offset from UTC in
/// quarter hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceCentreTime {
    pub year: u16,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
    pub tz_quarters: i8,
}

impl ServiceCentreTime {
    pub fn utc_offset_hours(&self) -> f32 {
        self.tz_quarters as f32 / 4.0
    }

    fn encode(&self) -> [u8; 7] {
        let swap = |v: u8| ((v % 10) << 4) | ((v / 10) % 10);
        let q = self.tz_quarters.unsigned_abs();
        let mut tz = swap(q);
        if self.tz_quarters < 0 {
            tz |= 0x08;
        }
        [
            swap((self.year % 100) as u8),
            swap(self.month),
            swap(self.day),
            swap(self.hour),
            swap(self.minute),
            swap(self.second),
            tz,
        ]
    }

    fn decode(b: &[u8]) -> Self {
        let unswap = |v: u8| (v & 0x0F) * 10 + (v >> 4);
        let tz = b[6];
        let quarters = ((tz & 0x07) * 10 + (tz >> 4)) as i8;
        ServiceCentreTime {
            year: 2000 + unswap(b[0]) as u16,
            month: unswap(b[1]),
            day: unswap(b[2]),
            hour: unswap(b[3]),
            minute: unswap(b[4]),
            second: unswap(b[5]),
            tz_quarters: if tz & 0x08 != 0 { -quarters } else { quarters },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsSubmit {
    pub message_ref: u8,
    pub destination: Address,
    #[serde(default)]
    pub pid: u8,
    pub dcs: DataCodingScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity_relative: Option<u8>,
    pub user_data: UserData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub udh: Option<ConcatHeader>,
}

impl SmsSubmit {
    /// A plain text submission, GSM 7-bit when possible and UCS-2 otherwise.
    pub fn text(destination: Address, text: &str) -> Self {
        SmsSubmit {
            message_ref: 0,
            destination,
            pid: 0,
            dcs: DataCodingScheme {
                alphabet: super::choose_alphabet(text),
            },
            validity_relative: None,
            user_data: UserData::Text(text.to_owned()),
            udh: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsDeliver {
    pub originator: Address,
    #[serde(default)]
    pub pid: u8,
    pub dcs: DataCodingScheme,
    pub timestamp: ServiceCentreTime,
    pub user_data: UserData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub udh: Option<ConcatHeader>,
}

/// Either TPDU direction, as decoded from an arbitrary PDU string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SmsPdu {
    Submit(SmsSubmit),
    Deliver(SmsDeliver),
}

/// Encodes a submission. The returned hex starts with a zero-length SCA and
/// the length excludes it (the value for `AT+CMGS=<length>`).
pub fn encode_submit(msg: &SmsSubmit) -> Result<(String, usize), SmsError> {
    let mut tpdu = Vec::with_capacity(64);
    let mut first = MTI_SUBMIT;
    if msg.validity_relative.is_some() {
        first |= VPF_RELATIVE;
    }
    if msg.udh.is_some() {
        first |= UDHI;
    }
    tpdu.push(first);
    tpdu.push(msg.message_ref);
    tpdu.extend(msg.destination.encode_tp()?);
    tpdu.push(msg.pid);
    tpdu.push(msg.dcs.to_octet());
    if let Some(vp) = msg.validity_relative {
        tpdu.push(vp);
    }
    encode_user_data(&mut tpdu, msg.dcs, &msg.user_data, msg.udh)?;
    if tpdu.len() > MAX_TPDU_LEN {
        return Err(SmsError::MessageTooLong {
            units: tpdu.len(),
            max: MAX_TPDU_LEN,
        });
    }
    let mut hex = String::with_capacity(2 + tpdu.len() * 2);
    hex.push_str("00");
    hex.push_str(&hex::encode_upper(&tpdu));
    Ok((hex, tpdu.len()))
}

/// Encodes a delivery (used by tests and tooling; the modem produces these).
pub fn encode_deliver(msg: &SmsDeliver) -> Result<String, SmsError> {
    let mut tpdu = Vec::with_capacity(64);
    let mut first = MTI_DELIVER | 0x04;
    if msg.udh.is_some() {
        first |= UDHI;
    }
    tpdu.push(first);
    tpdu.extend(msg.originator.encode_tp()?);
    tpdu.push(msg.pid);
    tpdu.push(msg.dcs.to_octet());
    tpdu.extend(msg.timestamp.encode());
    encode_user_data(&mut tpdu, msg.dcs, &msg.user_data, msg.udh)?;
    Ok(format!("00{}", hex::encode_upper(&tpdu)))
}

fn encode_user_data(
    out: &mut Vec<u8>,
    dcs: DataCodingScheme,
    data: &UserData,
    udh: Option<ConcatHeader>,
) -> Result<(), SmsError> {
    let header = match udh {
        Some(h) => {
            h.validate()?;
            h.to_udh().to_vec()
        }
        None => Vec::new(),
    };
    match (dcs.alphabet, data) {
        (Alphabet::Gsm7, UserData::Text(text)) => {
            let codes = gsm7::encode_septets(text)?;
            let header_septets = (header.len() * 8).div_ceil(7);
            let fill = header_septets * 7 - header.len() * 8;
            let max = MAX_GSM7_SEPTETS - header_septets;
            if codes.len() > max {
                return Err(SmsError::MessageTooLong {
                    units: codes.len(),
                    max,
                });
            }
            out.push((header_septets + codes.len()) as u8);
            out.extend_from_slice(&header);
            out.extend(gsm7::pack_septets(&codes, fill));
        }
        (Alphabet::Ucs2, UserData::Text(text)) => {
            let units: Vec<u16> = text.encode_utf16().collect();
            let max = (MAX_UD_OCTETS - header.len()) / 2;
            if units.len() > max {
                return Err(SmsError::MessageTooLong {
                    units: units.len(),
                    max,
                });
            }
            out.push((header.len() + units.len() * 2) as u8);
            out.extend_from_slice(&header);
            out.extend(units.iter().flat_map(|u| u.to_be_bytes()));
        }
        (Alphabet::Octet, UserData::Binary(bytes)) => {
            let max = MAX_UD_OCTETS - header.len();
            if bytes.len() > max {
                return Err(SmsError::MessageTooLong {
                    units: bytes.len(),
                    max,
                });
            }
            out.push((header.len() + bytes.len()) as u8);
            out.extend_from_slice(&header);
            out.extend_from_slice(bytes);
        }
        _ => return Err(SmsError::DcsMismatch),
    }
    Ok(())
}

fn decode_user_data(
    buf: &[u8],
    dcs: DataCodingScheme,
    has_udh: bool,
) -> Result<(UserData, Option<ConcatHeader>), SmsError> {
    let udl = *buf.first().ok_or(SmsError::TruncatedPdu)? as usize;
    let ud = &buf[1..];
    let ud_octets = match dcs.alphabet {
        Alphabet::Gsm7 => gsm7::packed_len(udl, 0),
        _ => udl,
    };
    if ud.len() < ud_octets {
        return Err(SmsError::TruncatedPdu);
    }
    let ud = &ud[..ud_octets];
    let (header_len, concat) = if has_udh {
        let udhl = *ud.first().ok_or(SmsError::TruncatedPdu)? as usize;
        let ies = ud.get(1..1 + udhl).ok_or(SmsError::TruncatedPdu)?;
        (1 + udhl, parse_concat(ies))
    } else {
        (0, None)
    };
    let data = match dcs.alphabet {
        Alphabet::Gsm7 => {
            let header_septets = (header_len * 8).div_ceil(7);
            let codes = gsm7::unpack_septets(ud, udl, 0);
            let body = codes.get(header_septets..).unwrap_or(&[]);
            UserData::Text(gsm7::decode_septets(body))
        }
        Alphabet::Ucs2 => {
            let body = &ud[header_len.min(ud.len())..];
            let units: Vec<u16> = body
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect();
            UserData::Text(String::from_utf16_lossy(&units))
        }
        Alphabet::Octet => UserData::Binary(ud[header_len.min(ud.len())..].to_vec()),
    };
    Ok((data, concat))
}

fn parse_concat(mut ies: &[u8]) -> Option<ConcatHeader> {
    while ies.len() >= 2 {
        let (iei, len) = (ies[0], ies[1] as usize);
        let body = ies.get(2..2 + len)?;
        match (iei, len) {
            (IEI_CONCAT_8BIT, 3) => {
                return Some(ConcatHeader {
                    reference: body[0],
                    total: body[1],
                    seq: body[2],
                })
            }
            (IEI_CONCAT_16BIT, 4) => {
                return Some(ConcatHeader {
                    reference: body[1],
                    total: body[2],
                    seq: body[3],
                })
            }
            _ => {}
        }
        ies = &ies[2 + len..];
    }
    None
}

fn parse_hex(pdu_hex: &str) -> Result<Vec<u8>, SmsError> {
    hex::decode(pdu_hex.trim()).map_err(|_| SmsError::BadHex)
}

/// Skips the leading SCA field and returns the TPDU bytes.
fn strip_sca(bytes: &[u8]) -> Result<&[u8], SmsError> {
    let sca_len = *bytes.first().ok_or(SmsError::TruncatedPdu)? as usize;
    bytes.get(1 + sca_len..).ok_or(SmsError::TruncatedPdu)
}

pub fn decode_deliver(pdu_hex: &str) -> Result<SmsDeliver, SmsError> {
    match decode(pdu_hex)? {
        SmsPdu::Deliver(d) => Ok(d),
        SmsPdu::Submit(_) => Err(SmsError::UnexpectedType("SMS-SUBMIT")),
    }
}

pub fn decode_submit(pdu_hex: &str) -> Result<SmsSubmit, SmsError> {
    match decode(pdu_hex)? {
        SmsPdu::Submit(s) => Ok(s),
        SmsPdu::Deliver(_) => Err(SmsError::UnexpectedType("SMS-DELIVER")),
    }
}

/// Decodes either direction based on the message type indicator.
pub fn decode(pdu_hex: &str) -> Result<SmsPdu, SmsError> {
    let bytes = parse_hex(pdu_hex)?;
    let tpdu = strip_sca(&bytes)?;
    let first = *tpdu.first().ok_or(SmsError::TruncatedPdu)?;
    let has_udh = first & UDHI != 0;
    match first & 0x03 {
        MTI_DELIVER => {
            let (originator, used) = Address::decode_tp(&tpdu[1..])?;
            let mut pos = 1 + used;
            let fixed = tpdu.get(pos..pos + 9).ok_or(SmsError::TruncatedPdu)?;
            let pid = fixed[0];
            let dcs = DataCodingScheme::from_octet(fixed[1])?;
            let timestamp = ServiceCentreTime::decode(&fixed[2..9]);
            pos += 9;
            let (user_data, udh) = decode_user_data(&tpdu[pos..], dcs, has_udh)?;
            Ok(SmsPdu::Deliver(SmsDeliver {
                originator,
                pid,
                dcs,
                timestamp,
                user_data,
                udh,
            }))
        }
        MTI_SUBMIT => {
            let message_ref = *tpdu.get(1).ok_or(SmsError::TruncatedPdu)?;
            let (destination, used) = Address::decode_tp(&tpdu[2..])?;
            let mut pos = 2 + used;
            let fixed = tpdu.get(pos..pos + 2).ok_or(SmsError::TruncatedPdu)?;
            let pid = fixed[0];
            let dcs = DataCodingScheme::from_octet(fixed[1])?;
            pos += 2;
            let validity_relative = match (first >> 3) & 0x03 {
                0 => None,
                2 => {
                    let vp = *tpdu.get(pos).ok_or(SmsError::TruncatedPdu)?;
                    pos += 1;
                    Some(vp)
                }
                // enhanced and absolute formats are seven octets; skipped
                _ => {
                    pos += 7;
                    None
                }
            };
            let rest = tpdu.get(pos..).ok_or(SmsError::TruncatedPdu)?;
            let (user_data, udh) = decode_user_data(rest, dcs, has_udh)?;
            Ok(SmsPdu::Submit(SmsSubmit {
                message_ref,
                destination,
                pid,
                dcs,
                validity_relative,
                user_data,
                udh,
            }))
        }
        _ => Err(SmsError::UnexpectedType("unsupported message type")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn submit_vector_assembled_field_by_field() {
        // SCA 00, first octet 01, MR 00, DA len 0C type 91 + swapped digits,
        // PID 00, DCS 00, UDL 05, "hello" packed.
        let expected = [
            "00",
            "01",
            "00",
            "0C",
            "91",
            "947110325476",
            "00",
            "00",
            "05",
            "E8329BFD06",
        ]
        .concat();
        let msg = SmsSubmit::text("+491701234567".parse().unwrap(), "hello");
        let (hex, len) = encode_submit(&msg).unwrap();
        assert_eq!(hex, expected);
        assert_eq!(len, 18);
        assert_eq!(decode_submit(&hex).unwrap(), msg);
    }

    #[test]
    fn known_deliver_vector() {
        let hex = "00040B913316325476F800004230510103544008C834888E2ECBCB";
        let d = decode_deliver(hex).unwrap();
        assert_eq!(d.originator.to_string(), "+33612345678");
        assert_eq!(d.user_data, UserData::Text("Hi there".into()));
        assert_eq!(
            d.timestamp,
            ServiceCentreTime {
                year: 2024,
                month: 3,
                day: 15,
                hour: 10,
                minute: 30,
                second: 45,
                tz_quarters: 4
            }
        );
        assert_eq!(d.timestamp.utc_offset_hours(), 1.0);
        assert_eq!(encode_deliver(&d).unwrap(), hex);
    }

    #[test]
    fn negative_timezone_uses_bit_three() {
        let ts = ServiceCentreTime {
            year: 2023,
            month: 12,
            day: 31,
            hour: 23,
            minute: 59,
            second: 59,
            tz_quarters: -20,
        };
        let enc = ts.encode();
        assert_eq!(enc[6], 0x0A);
        assert_eq!(ServiceCentreTime::decode(&enc), ts);
    }

    #[test]
    fn ucs2_euro_sign() {
        let d = SmsDeliver {
            originator: "+1234".parse().unwrap(),
            pid: 0,
            dcs: DataCodingScheme::UCS2,
            timestamp: ServiceCentreTime {
                year: 2020,
                month: 1,
                day: 1,
                hour: 0,
                minute: 0,
                second: 0,
                tz_quarters: 0,
            },
            user_data: UserData::Text("€".into()),
            udh: None,
        };
        let hex = encode_deliver(&d).unwrap();
        assert!(hex.ends_with("0220AC"));
        assert_eq!(
            decode_deliver(&hex).unwrap().user_data,
            UserData::Text("€".into())
        );
    }

    #[test]
    fn too_long_without_udh() {
        let text = "a".repeat(161);
        let msg = SmsSubmit::text("+33612345678".parse().unwrap(), &text);
        assert!(matches!(
            encode_submit(&msg),
            Err(SmsError::MessageTooLong {
                units: 161,
                max: 160
            })
        ));
        let msg = SmsSubmit::text("+33612345678".parse().unwrap(), &"a".repeat(160));
        assert!(encode_submit(&msg).is_ok());
    }

    #[test]
    fn udh_roundtrip_gsm7() {
        let mut msg = SmsSubmit::text("+33612345678".parse().unwrap(), &"x".repeat(153));
        msg.udh = Some(ConcatHeader {
            reference: 7,
            total: 2,
            seq: 1,
        });
        let (hex, _) = encode_submit(&msg).unwrap();
        assert_eq!(decode_submit(&hex).unwrap(), msg);
        msg.user_data = UserData::Text("x".repeat(154));
        assert!(encode_submit(&msg).is_err());
    }

    #[test]
    fn validity_period_roundtrip() {
        let mut msg = SmsSubmit::text("+33612345678".parse().unwrap(), "vp");
        msg.validity_relative = Some(0xA7);
        let (hex, _) = encode_submit(&msg).unwrap();
        assert_eq!(&hex[2..4], "11");
        assert_eq!(decode_submit(&hex).unwrap(), msg);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode("zz"), Err(SmsError::BadHex));
        assert_eq!(decode(""), Err(SmsError::TruncatedPdu));
        assert_eq!(decode("0004"), Err(SmsError::TruncatedPdu));
        assert_eq!(
            decode("00040B913316325476F800804230510103544000"),
            Err(SmsError::UnsupportedDcs(0x80))
        );
    }

    #[test]
    fn dcs_mismatch() {
        let mut msg = SmsSubmit::text("+33612345678".parse().unwrap(), "x");
        msg.dcs = DataCodingScheme::OCTET;
        assert_eq!(encode_submit(&msg), Err(SmsError::DcsMismatch));
    }
}
