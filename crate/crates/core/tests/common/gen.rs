//! Random message generators shared by the codec property tests.

use cellgate::sms::{
    Address, Alphabet, ConcatHeader, DataCodingScheme, NumberingPlan, ServiceCentreTime,
    SmsDeliver, SmsSubmit, TypeOfNumber, UserData,
};
use proptest::prelude::*;

/// Characters that cost two septets.
pub const GSM_EXT: &[char] = &['^', '{', '}', '\\', '[', '~', ']', '|', '€', '\u{0c}'];

const GSM_BASIC_SAMPLE: &str = "@£$¥èéùìòÇØøÅåΔ_ΦΓΛΩΠΨΣΘΞÆæßÉ !\"#¤%&'()*+,-./0123456789:;<=>?¡ABCDEFGHIJKLMNOPQRSTUVWXYZÄÖÑÜ§¿abcdefghijklmnopqrstuvwxyzäöñüà\n\r";

pub fn septet_cost(text: &str) -> usize {
    text.chars()
        .map(|c| if GSM_EXT.contains(&c) { 2 } else { 1 })
        .sum()
}

fn gsm_char() -> impl Strategy<Value = char> {
    let basic: Vec<char> = GSM_BASIC_SAMPLE.chars().collect();
    prop_oneof![
        12 => proptest::sample::select(basic),
        1 => proptest::sample::select(GSM_EXT.to_vec()),
    ]
}

fn bmp_char() -> impl Strategy<Value = char> {
    prop_oneof![
        proptest::char::range('\u{0}', '\u{D7FF}'),
        proptest::char::range('\u{E000}', '\u{FFFF}'),
        proptest::sample::select(vec!['π', 'ж', '中', '한', 'ü', 'a', ' ', '€']),
    ]
}

/// GSM 7-bit text of 0..=160 characters that fits `max_septets`.
pub fn gsm_text(max_septets: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec(gsm_char(), 0..=160).prop_map(move |chars| {
        let mut s = String::new();
        let mut cost = 0;
        for c in chars {
            let k = if GSM_EXT.contains(&c) { 2 } else { 1 };
            if cost + k > max_septets {
                break;
            }
            cost += k;
            s.push(c);
        }
        s
    })
}

/// UCS-2 text of at most `max_units` BMP characters.
pub fn ucs2_text(max_units: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec(bmp_char(), 0..=max_units).prop_map(|v| v.into_iter().collect())
}

pub fn concat() -> impl Strategy<Value = Option<ConcatHeader>> {
    prop_oneof![
        Just(None),
        (any::<u8>(), 1u8..=255)
            .prop_flat_map(|(r, total)| (Just(r), Just(total), 1..=total))
            .prop_map(|(reference, total, seq)| Some(ConcatHeader {
                reference,
                total,
                seq
            })),
    ]
}

/// (alphabet, text, udh) where the text fits one message with that header.
pub fn body() -> impl Strategy<Value = (Alphabet, String, Option<ConcatHeader>)> {
    (any::<bool>(), concat()).prop_flat_map(|(gsm, udh)| {
        let text = if gsm {
            gsm_text(if udh.is_some() { 153 } else { 160 }).boxed()
        } else {
            ucs2_text(if udh.is_some() { 67 } else { 70 }).boxed()
        };
        let alphabet = if gsm { Alphabet::Gsm7 } else { Alphabet::Ucs2 };
        (Just(alphabet), text, Just(udh))
    })
}

pub fn digits(max: usize) -> impl Strategy<Value = String> {
    proptest::string::string_regex(&format!("[0-9]{{1,{max}}}")).unwrap()
}

pub fn phone_address() -> impl Strategy<Value = Address> {
    (any::<bool>(), digits(20)).prop_map(|(intl, d)| Address {
        ton: if intl {
            TypeOfNumber::International
        } else {
            TypeOfNumber::Unknown
        },
        npi: NumberingPlan::Isdn,
        digits: d,
    })
}

pub fn alnum_address() -> impl Strategy<Value = Address> {
    proptest::string::string_regex("[A-Za-z][A-Za-z0-9 ]{0,10}")
        .unwrap()
        .prop_map(|s| Address {
            ton: TypeOfNumber::Alphanumeric,
            npi: NumberingPlan::Unknown,
            digits: s,
        })
}

pub fn timestamp() -> impl Strategy<Value = ServiceCentreTime> {
    (
        2000u16..=2099,
        1u8..=12,
        1u8..=28,
        0u8..24,
        0u8..60,
        0u8..60,
        -48i8..=56,
    )
        .prop_map(
            |(year, month, day, hour, minute, second, tz_quarters)| ServiceCentreTime {
                year,
                month,
                day,
                hour,
                minute,
                second,
                tz_quarters,
            },
        )
}

pub fn submit() -> impl Strategy<Value = SmsSubmit> {
    (
        any::<u8>(),
        phone_address(),
        proptest::option::of(any::<u8>()),
        body(),
    )
        .prop_map(
            |(message_ref, destination, validity_relative, (alphabet, text, udh))| SmsSubmit {
                message_ref,
                destination,
                pid: 0,
                dcs: DataCodingScheme { alphabet },
                validity_relative,
                user_data: UserData::Text(text),
                udh,
            },
        )
}

pub fn deliver() -> impl Strategy<Value = SmsDeliver> {
    (
        prop_oneof![3 => phone_address(), 1 => alnum_address()],
        timestamp(),
        body(),
    )
        .prop_map(
            |(originator, timestamp, (alphabet, text, udh))| SmsDeliver {
                originator,
                pid: 0,
                dcs: DataCodingScheme { alphabet },
                timestamp,
                user_data: UserData::Text(text),
                udh,
            },
        )
}
