//! C ABI over the cellgate codecs and the AT line classifier.
//!
//! Conventions:
//! - every function returns a [`CgStatus`]; results go through out-pointers;
//! - strings in are NUL-terminated UTF-8, strings out are owned by the caller
//!   and released with [`cg_string_free`]; byte buffers with [`cg_bytes_free`];
//! - the message for the last failure on the calling thread is available from
//!   [`cg_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cellgate::at::response::{parse_line, AtResponseLine, Line, UrcRegistry};
use cellgate::{mms, sms};
use serde_json::{json, Value};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Input was not valid JSON, hex, or did not describe a PDU.
    InvalidInput = 3,
    /// The codec rejected the input.
    Codec = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

/// How the AT classifier saw a line.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgLineKind {
    Empty = 0,
    Prompt = 1,
    Echo = 2,
    Info = 3,
    Final = 4,
    Urc = 5,
}

/// Opaque set of unsolicited result code prefixes.
pub struct CgUrcRegistry {
    inner: UrcRegistry,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: CgStatus, msg: impl Into<String>) -> CgStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> CgStatus) -> CgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == CgStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(CgStatus::Internal, "internal panic"),
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, CgStatus> {
    if p.is_null() {
        return Err(fail(CgStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(CgStatus::InvalidUtf8, e.to_string()))
}

/// # Safety
/// `out` is null or valid for one pointer write.
unsafe fn write_string(out: *mut *mut c_char, s: String) -> CgStatus {
    if out.is_null() {
        return fail(CgStatus::NullPointer, "null out pointer");
    }
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            CgStatus::Ok
        }
        Err(_) => fail(CgStatus::Codec, "result contains a NUL byte"),
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread; empty after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `data`/`len` are null/0 or exactly as returned by this library.
#[no_mangle]
pub unsafe extern "C" fn cg_bytes_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Vec::from_raw_parts(data, len, len));
    }
}

/// Decodes an SMS-SUBMIT or SMS-DELIVER (hex, with SMSC prefix) to JSON.
///
/// # Safety
/// `hex` is a NUL-terminated string; `out_json` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_sms_decode(hex: *const c_char, out_json: *mut *mut c_char) -> CgStatus {
    guard(|| {
        let hex = match read_str(hex) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match sms::decode(hex) {
            Ok(pdu) => write_string(out_json, serde_json::to_string(&pdu).expect("serializable")),
            Err(e) => fail(CgStatus::Codec, e.to_string()),
        }
    })
}

/// Encodes the JSON form produced by [`cg_sms_decode`] back to hex.
///
/// # Safety
/// `json` is a NUL-terminated string; `out_hex` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_sms_encode(json: *const c_char, out_hex: *mut *mut c_char) -> CgStatus {
    guard(|| {
        let text = match read_str(json) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let pdu: sms::SmsPdu = match serde_json::from_str(text) {
            Ok(p) => p,
            Err(e) => return fail(CgStatus::InvalidInput, e.to_string()),
        };
        let hex = match &pdu {
            sms::SmsPdu::Submit(s) => sms::encode_submit(s).map(|(h, _)| h),
            sms::SmsPdu::Deliver(d) => sms::encode_deliver(d),
        };
        match hex {
            Ok(h) => write_string(out_hex, h),
            Err(e) => fail(CgStatus::Codec, e.to_string()),
        }
    })
}

/// Builds the SUBMIT PDUs for a text, segmenting when needed. Writes a JSON
/// array of `{"pdu": <hex>, "length": <tpdu octets>}`.
///
/// # Safety
/// `to` and `text` are NUL-terminated strings; `out_json` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_sms_submit(
    to: *const c_char,
    text: *const c_char,
    concat_ref: u8,
    out_json: *mut *mut c_char,
) -> CgStatus {
    guard(|| {
        let (to, text) = match (read_str(to), read_str(text)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let dest: sms::Address = match to.parse() {
            Ok(a) => a,
            Err(e) => return fail(CgStatus::InvalidInput, format!("{e}")),
        };
        match sms::build_submits(&dest, text, concat_ref, None) {
            Ok(parts) => {
                let v: Vec<Value> = parts
                    .into_iter()
                    .map(|(pdu, len)| json!({ "pdu": pdu, "length": len }))
                    .collect();
                write_string(out_json, Value::Array(v).to_string())
            }
            Err(e) => fail(CgStatus::Codec, e.to_string()),
        }
    })
}

/// Decodes a binary MMS PDU to JSON.
///
/// # Safety
/// `data` is valid for `len` bytes (or null with `len == 0`); `out_json` is
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_mms_decode(
    data: *const u8,
    len: usize,
    out_json: *mut *mut c_char,
) -> CgStatus {
    guard(|| {
        if data.is_null() && len > 0 {
            return fail(CgStatus::NullPointer, "null data");
        }
        let bytes = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(data, len)
        };
        match mms::decode(bytes) {
            Ok(pdu) => write_string(out_json, serde_json::to_string(&pdu).expect("serializable")),
            Err(e) => fail(CgStatus::Codec, e.to_string()),
        }
    })
}

/// Encodes the JSON form of an MMS PDU. The buffer is released with
/// [`cg_bytes_free`].
///
/// # Safety
/// `json` is a NUL-terminated string; `out_data` and `out_len` are valid for
/// one write each.
#[no_mangle]
pub unsafe extern "C" fn cg_mms_encode(
    json: *const c_char,
    out_data: *mut *mut u8,
    out_len: *mut usize,
) -> CgStatus {
    guard(|| {
        if out_data.is_null() || out_len.is_null() {
            return fail(CgStatus::NullPointer, "null out pointer");
        }
        let text = match read_str(json) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let pdu: mms::MmsPdu = match serde_json::from_str(text) {
            Ok(p) => p,
            Err(e) => return fail(CgStatus::InvalidInput, e.to_string()),
        };
        match mms::encode(&pdu) {
            Ok(bytes) => {
                let mut b = bytes.into_boxed_slice();
                *out_len = b.len();
                *out_data = b.as_mut_ptr();
                std::mem::forget(b);
                CgStatus::Ok
            }
            Err(e) => fail(CgStatus::Codec, e.to_string()),
        }
    })
}

/// A registry with the standard unsolicited result codes.
#[no_mangle]
pub extern "C" fn cg_urc_registry_new() -> *mut CgUrcRegistry {
    Box::into_raw(Box::new(CgUrcRegistry {
        inner: UrcRegistry::default(),
    }))
}

/// A registry with no prefixes at all.
#[no_mangle]
pub extern "C" fn cg_urc_registry_empty() -> *mut CgUrcRegistry {
    Box::into_raw(Box::new(CgUrcRegistry {
        inner: UrcRegistry::empty(),
    }))
}

/// # Safety
/// `reg` is null or came from `cg_urc_registry_new`/`_empty` and is not used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn cg_urc_registry_free(reg: *mut CgUrcRegistry) {
    if !reg.is_null() {
        drop(Box::from_raw(reg));
    }
}

/// Adds a vendor prefix such as `"^BOOT"`. With `two_line` set, the payload
/// is expected on the following line.
///
/// # Safety
/// `reg` is a live registry; `prefix` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cg_urc_registry_add(
    reg: *mut CgUrcRegistry,
    prefix: *const c_char,
    two_line: bool,
) -> CgStatus {
    guard(|| {
        let Some(reg) = reg.as_mut() else {
            return fail(CgStatus::NullPointer, "null registry");
        };
        let p = match read_str(prefix) {
            Ok(s) => s,
            Err(s) => return s,
        };
        if p.trim().is_empty() {
            return fail(CgStatus::InvalidInput, "empty prefix");
        }
        if two_line {
            reg.inner.register_two_line(p);
        } else {
            reg.inner.register(p);
        }
        CgStatus::Ok
    })
}

/// Classifies one line without its terminator, the way the engine would
/// with no command in flight. `out_json` (optional) receives the parsed
/// fields.
///
/// # Safety
/// `reg` is a live registry; `line` is a NUL-terminated string; `out_kind`
/// is valid for one write; `out_json` is null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_classify_line(
    reg: *const CgUrcRegistry,
    line: *const c_char,
    out_kind: *mut CgLineKind,
    out_json: *mut *mut c_char,
) -> CgStatus {
    guard(|| {
        let Some(reg) = reg.as_ref() else {
            return fail(CgStatus::NullPointer, "null registry");
        };
        if out_kind.is_null() {
            return fail(CgStatus::NullPointer, "null out_kind");
        }
        if line.is_null() {
            return fail(CgStatus::NullPointer, "null line");
        }
        let raw = CStr::from_ptr(line).to_bytes();
        let (kind, detail) = match parse_line(raw, &reg.inner) {
            Line::Urc(u) => (
                CgLineKind::Urc,
                json!({ "prefix": u.prefix, "payload": u.payload }),
            ),
            Line::Response(AtResponseLine::Empty) => (CgLineKind::Empty, json!({})),
            Line::Response(AtResponseLine::Prompt) => (CgLineKind::Prompt, json!({})),
            Line::Response(AtResponseLine::Echo(e)) => (CgLineKind::Echo, json!({ "echo": e })),
            Line::Response(AtResponseLine::Final(r)) => (
                CgLineKind::Final,
                serde_json::to_value(r).expect("serializable"),
            ),
            Line::Response(AtResponseLine::Info(i)) => (
                CgLineKind::Info,
                json!({ "prefix": i.prefix, "values": i.raw_values }),
            ),
        };
        *out_kind = kind;
        if out_json.is_null() {
            return CgStatus::Ok;
        }
        write_string(out_json, detail.to_string())
    })
}
