use std::collections::BTreeSet;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "result", content = "code", rename_all = "snake_case")]
pub enum FinalResult {
    Ok,
    Error,
    CmeError(u32),
    CmsError(u32),
    NoCarrier,
    Busy,
    NoAnswer,
    Connect,
}

impl FinalResult {
    pub fn is_ok(self) -> bool {
        matches!(self, FinalResult::Ok | FinalResult::Connect)
    }
}

impl fmt::Display for FinalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FinalResult::Ok => f.write_str("OK"),
            FinalResult::Error => f.write_str("ERROR"),
            FinalResult::CmeError(c) => write!(f, "+CME ERROR: {c}"),
            FinalResult::CmsError(c) => write!(f, "+CMS ERROR: {c}"),
            FinalResult::NoCarrier => f.write_str("NO CARRIER"),
            FinalResult::Busy => f.write_str("BUSY"),
            FinalResult::NoAnswer => f.write_str("NO ANSWER"),
            FinalResult::Connect => f.write_str("CONNECT"),
        }
    }
}

/// An information response line: `+CSQ: 18,99` has prefix `+CSQ` and raw
/// values `18,99`; lines without a colon have an empty prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoLine {
    pub prefix: String,
    pub raw_values: String,
    /// The complete line as received.
    pub line: String,
}

impl InfoLine {
    pub fn new(line: &str) -> Self {
        match line.split_once(':') {
            Some((prefix, rest)) => InfoLine {
                prefix: prefix.trim().to_owned(),
                raw_values: rest.trim().to_owned(),
                line: line.to_owned(),
            },
            None => InfoLine {
                prefix: String::new(),
                raw_values: line.trim().to_owned(),
                line: line.to_owned(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AtResponseLine {
    Info(InfoLine),
    Final(FinalResult),
    Prompt,
    Echo(String),
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Urc {
    pub prefix: String,
    pub payload: String,
    pub received_at: Instant,
}

impl Urc {
    pub fn new(prefix: impl Into<String>, payload: impl Into<String>) -> Self {
        Urc {
            prefix: prefix.into(),
            payload: payload.into(),
            received_at: Instant::now(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Line {
    Response(AtResponseLine),
    Urc(Urc),
}

/// Known unsolicited result code prefixes. Prefixes in `two_line` carry their
/// payload on the following line (e.g. `+CMT: ,23` then the PDU).
#[derive(Debug, Clone)]
pub struct UrcRegistry {
    prefixes: BTreeSet<String>,
    two_line: BTreeSet<String>,
}

impl Default for UrcRegistry {
    fn default() -> Self {
        let prefixes = [
            "RING", "+CRING", "+CLIP", "+CMTI", "+CMT", "+CDS", "+CDSI", "+CBM", "+CREG", "+CGREG",
            "+CUSD", "+CCWA", "+CMGS",
        ];
        // +CMGS is listed so a late confirmation after a timeout is not lost;
        // while +CMGS is in flight it is treated as an information response.
        UrcRegistry {
            prefixes: prefixes.iter().map(|s| s.to_string()).collect(),
            two_line: ["+CMT", "+CDS", "+CBM"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl UrcRegistry {
    pub fn empty() -> Self {
        UrcRegistry {
            prefixes: BTreeSet::new(),
            two_line: BTreeSet::new(),
        }
    }

    pub fn register(&mut self, prefix: impl Into<String>) {
        self.prefixes.insert(prefix.into());
    }

    pub fn register_two_line(&mut self, prefix: impl Into<String>) {
        let p = prefix.into();
        self.two_line.insert(p.clone());
        self.prefixes.insert(p);
    }

    pub fn is_two_line(&self, prefix: &str) -> bool {
        self.two_line.contains(prefix)
    }

    /// The registered prefix `line` starts with, if any. A prefix matches the
    /// whole line or is followed by a colon.
    pub fn match_line<'a>(&'a self, line: &str) -> Option<&'a str> {
        self.prefixes
            .iter()
            .find(|p| {
                line == p.as_str()
                    || (line.starts_with(p.as_str())
                        && line[p.len()..].trim_start().starts_with(':'))
            })
            .map(String::as_str)
    }

    pub fn prefixes(&self) -> impl Iterator<Item = &str> {
        self.prefixes.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for UrcRegistry {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut r = UrcRegistry::empty();
        for p in iter {
            r.register(p);
        }
        r
    }
}

fn parse_error_code(text: &str) -> u32 {
    let text = text.trim();
    if let Ok(n) = text.parse() {
        return n;
    }
    // verbose error texts for the few codes the gateway reacts to
    match text.to_ascii_lowercase().as_str() {
        "sim not inserted" => 10,
        "sim pin required" => 11,
        "sim puk required" => 12,
        "incorrect password" => 16,
        "memory full" => 20,
        "invalid index" => 21,
        "not found" => 22,
        "text string too long" => 24,
        "no network service" => 30,
        _ => 100,
    }
}

fn final_result(line: &str) -> Option<FinalResult> {
    Some(match line {
        "OK" => FinalResult::Ok,
        "ERROR" => FinalResult::Error,
        "NO CARRIER" => FinalResult::NoCarrier,
        "BUSY" => FinalResult::Busy,
        "NO ANSWER" => FinalResult::NoAnswer,
        "CONNECT" => FinalResult::Connect,
        _ => {
            if let Some(rest) = line.strip_prefix("+CME ERROR:") {
                FinalResult::CmeError(parse_error_code(rest))
            } else if let Some(rest) = line.strip_prefix("+CMS ERROR:") {
                FinalResult::CmsError(parse_error_code(rest))
            } else if line.starts_with("CONNECT ") {
                FinalResult::Connect
            } else {
                return None;
            }
        }
    })
}

/// Classifies one line (already stripped of its terminator). Never fails:
/// anything unrecognised becomes an information line.
pub fn parse_line(raw: &[u8], urcs: &UrcRegistry) -> Line {
    let text = String::from_utf8_lossy(raw);
    let line = text.trim_end_matches(['\r', '\n']);
    if line.trim().is_empty() {
        return Line::Response(AtResponseLine::Empty);
    }
    if line == ">" || line == "> " {
        return Line::Response(AtResponseLine::Prompt);
    }
    if let Some(result) = final_result(line.trim()) {
        return Line::Response(AtResponseLine::Final(result));
    }
    if let Some(prefix) = urcs.match_line(line) {
        let payload = line[prefix.len()..]
            .trim_start()
            .strip_prefix(':')
            .unwrap_or("")
            .trim();
        return Line::Urc(Urc::new(prefix, payload));
    }
    if line.len() >= 2 && line.as_bytes()[..2].eq_ignore_ascii_case(b"AT") && !line.contains(':') {
        return Line::Response(AtResponseLine::Echo(line.to_owned()));
    }
    Line::Response(AtResponseLine::Info(InfoLine::new(line)))
}
