//! SMS in PDU mode: GSM 7-bit packing, semi-octet addresses, SUBMIT/DELIVER
//! TPDUs and concatenation. Everything here is pure.

pub mod address;
pub mod gsm7;
pub mod pdu;
pub mod segment;

use thiserror::Error;

pub use address::{decode_semi_octets, encode_semi_octets, Address, NumberingPlan, TypeOfNumber};
pub use gsm7::{pack_gsm7, unpack_gsm7};
pub use pdu::{
    decode, decode_deliver, decode_submit, encode_deliver, encode_submit, Alphabet, ConcatHeader,
    DataCodingScheme, ServiceCentreTime, SmsDeliver, SmsPdu, SmsSubmit, UserData,
};
pub use segment::{segment, Segment};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmsError {
    #[error("character {0:?} is not in the GSM 7-bit alphabet")]
    UnmappableCharacter(char),
    #[error("packed length mismatch: expected {expected} octets, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid digit {0:?}")]
    InvalidDigit(char),
    #[error("invalid address {0:?}")]
    InvalidAddress(String),
    #[error("message too long: {units} > {max}")]
    MessageTooLong { units: usize, max: usize },
    #[error("truncated PDU")]
    TruncatedPdu,
    #[error("bad hex")]
    BadHex,
    #[error("unsupported data coding scheme 0x{0:02X}")]
    UnsupportedDcs(u8),
    #[error("user data does not match the data coding scheme")]
    DcsMismatch,
    #[error("invalid concatenation header")]
    InvalidConcat,
    #[error("unexpected TPDU type: {0}")]
    UnexpectedType(&'static str),
}

/// GSM 7-bit when every character maps, UCS-2 otherwise.
pub fn choose_alphabet(text: &str) -> Alphabet {
    if gsm7::is_gsm7(text) {
        Alphabet::Gsm7
    } else {
        Alphabet::Ucs2
    }
}

/// Builds the SUBMIT PDUs for a text, segmenting as needed. Returns
/// `(hex, tpdu_len)` per part.
pub fn build_submits(
    destination: &Address,
    text: &str,
    concat_ref: u8,
    validity_relative: Option<u8>,
) -> Result<Vec<(String, usize)>, SmsError> {
    let alphabet = choose_alphabet(text);
    segment(text, alphabet, concat_ref)
        .into_iter()
        .map(|seg| {
            encode_submit(&SmsSubmit {
                message_ref: 0,
                destination: destination.clone(),
                pid: 0,
                dcs: DataCodingScheme { alphabet },
                validity_relative,
                user_data: UserData::Text(seg.text),
                udh: seg.udh,
            })
        })
        .collect()
}
