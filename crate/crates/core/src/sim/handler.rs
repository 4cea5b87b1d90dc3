//! Command interpreter of the virtual modem. Pure over `SimState`: the same
//! lines against the same state always produce the same bytes.

use super::oracle::{self, Submit};
use super::state::{CallDir, PbEntry, PinState, SimCallState, SimState, StoredPdu, SubmitRecord};

/// Side effects the I/O layer must carry out after a reply is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    /// An outgoing call was placed; its final result comes after the dial delay.
    Dial {
        generation: u64,
    },
    CallActive {
        generation: u64,
    },
    CallEnded {
        generation: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pending {
    PduSubmit { len: usize },
    TextSubmit { destination: String },
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Reply {
    pub bytes: Vec<u8>,
    pub pending: Option<Pending>,
    pub effects: Vec<Effect>,
}

impl Reply {
    fn line(&mut self, s: &str) {
        self.bytes.extend_from_slice(b"\r\n");
        self.bytes.extend_from_slice(s.as_bytes());
        self.bytes.extend_from_slice(b"\r\n");
    }

    fn lines(mut self, lines: Vec<String>) -> Self {
        for l in lines {
            self.line(&l);
        }
        self
    }
}

pub fn frame(line: &str) -> Vec<u8> {
    format!("\r\n{line}\r\n").into_bytes()
}

enum Outcome {
    /// Information lines, then the final result.
    Done(Vec<String>, String),
    Prompt(Pending),
    /// No final result yet (dial in progress).
    Deferred,
}

use Outcome::*;

fn ok(info: Vec<String>) -> Outcome {
    Done(info, "OK".into())
}

fn error() -> Outcome {
    Done(vec![], "ERROR".into())
}

fn cms(code: u32) -> Outcome {
    Done(vec![], format!("+CMS ERROR: {code}"))
}

fn cme(state: &SimState, code: u32) -> Outcome {
    if state.cmee == 0 {
        error()
    } else {
        Done(vec![], format!("+CME ERROR: {code}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Form {
    Execute,
    Read,
    Test,
    Set,
}

/// Splits `a,"b,c",,3` into fields; quoted fields lose their quotes.
fn fields(s: &str) -> Vec<Option<String>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut had_quotes = false;
    for c in s.chars() {
        match c {
            '"' => {
                quoted = !quoted;
                had_quotes = true;
            }
            ',' if !quoted => {
                let v = cur.trim().to_owned();
                out.push((had_quotes || !v.is_empty()).then_some(v));
                cur.clear();
                had_quotes = false;
            }
            _ => cur.push(c),
        }
    }
    let v = if had_quotes {
        cur
    } else {
        cur.trim().to_owned()
    };
    out.push((had_quotes || !v.is_empty()).then_some(v));
    out
}

fn int(f: &[Option<String>], i: usize) -> Option<i64> {
    f.get(i)?.as_deref()?.trim().parse().ok()
}

fn text(f: &[Option<String>], i: usize) -> Option<String> {
    f.get(i)?.clone()
}

/// Handles one command line (without its CR).
pub fn handle_line(state: &mut SimState, raw: &str) -> Reply {
    let mut reply = Reply::default();
    if state.echo {
        reply.bytes.extend_from_slice(raw.as_bytes());
        reply.bytes.push(b'\r');
    }
    let line = raw.trim();
    if line.is_empty() {
        return reply;
    }
    if line.len() < 2 || !line.as_bytes()[..2].eq_ignore_ascii_case(b"AT") {
        reply.line("ERROR");
        return reply;
    }
    let body = &line[2..];
    let outcome = if body.is_empty() {
        ok(vec![])
    } else {
        dispatch(state, body, &mut reply)
    };
    match outcome {
        Done(info, fin) => {
            let mut r = reply.lines(info);
            r.line(&fin);
            r
        }
        Prompt(p) => {
            reply.bytes.extend_from_slice(b"\r\n> ");
            reply.pending = Some(p);
            reply
        }
        Deferred => reply,
    }
}

fn dispatch(state: &mut SimState, body: &str, reply: &mut Reply) -> Outcome {
    let first = body.as_bytes()[0].to_ascii_uppercase();
    let (name, rest) = if first == b'+' || first == b'*' {
        let end = body.find(['=', '?']).unwrap_or(body.len());
        (body[..end].to_ascii_uppercase(), &body[end..])
    } else {
        ((first as char).to_string(), &body[1..])
    };
    if !state.capabilities.contains(&name) {
        return error();
    }
    if !matches!(
        name.as_str(),
        "E" | "+CMEE" | "+CPIN" | "+CGMI" | "+CGMM" | "+CLAC" | "+CSQ" | "+CREG" | "H" | "+CHUP"
    ) {
        match state.pin.state {
            PinState::Ready => {}
            PinState::SimPin => return cme(state, 11),
            PinState::SimPuk => return cme(state, 12),
        }
    }
    match name.as_str() {
        "E" => match rest {
            "" | "0" => {
                state.echo = false;
                ok(vec![])
            }
            "1" => {
                state.echo = true;
                ok(vec![])
            }
            _ => error(),
        },
        "A" if rest.is_empty() => answer(state, reply),
        "H" if rest.is_empty() || rest == "0" => hangup(state, reply),
        "D" => dial(state, rest, reply),
        _ if name.starts_with('+') => {
            let (form, args) = if rest == "=?" {
                (Form::Test, "")
            } else if rest == "?" {
                (Form::Read, "")
            } else if let Some(a) = rest.strip_prefix('=') {
                (Form::Set, a)
            } else if rest.is_empty() {
                (Form::Execute, "")
            } else {
                return error();
            };
            extended(state, &name, form, args, reply)
        }
        _ => error(),
    }
}

fn answer(state: &mut SimState, reply: &mut Reply) -> Outcome {
    match &mut state.call {
        Some(c) if c.direction == CallDir::Incoming && c.state == SimCallState::Ringing => {
            c.state = SimCallState::Active;
            reply.effects.push(Effect::CallActive {
                generation: c.generation,
            });
            ok(vec![])
        }
        _ => Done(vec![], "NO CARRIER".into()),
    }
}

fn hangup(state: &mut SimState, reply: &mut Reply) -> Outcome {
    if let Some(c) = state.call.take() {
        reply.effects.push(Effect::CallEnded {
            generation: c.generation,
        });
    }
    ok(vec![])
}

fn dial(state: &mut SimState, rest: &str, reply: &mut Reply) -> Outcome {
    let Some(target) = rest.strip_suffix(';') else {
        // data and fax calls are not emulated
        return Done(vec![], "NO CARRIER".into());
    };
    if state.call.is_some() {
        return cme(state, 3);
    }
    let number = if let Some(idx) = target.strip_prefix('>') {
        let Ok(idx) = idx.trim().parse::<u32>() else {
            return error();
        };
        match state
            .phonebook
            .get(&state.pb_storage)
            .and_then(|p| p.entries.get(&idx))
        {
            Some(e) if e.ton == 145 => format!("+{}", e.number),
            Some(e) => e.number.clone(),
            None => return cme(state, 22),
        }
    } else {
        target.to_owned()
    };
    let digits = number.strip_prefix('+').unwrap_or(&number);
    if digits.is_empty()
        || !digits
            .chars()
            .all(|c| c.is_ascii_digit() || c == '*' || c == '#')
    {
        return error();
    }
    if !state.is_registered() {
        return Done(vec![], "NO CARRIER".into());
    }
    let generation = state.new_call(&number, CallDir::Outgoing, SimCallState::Dialing);
    reply.effects.push(Effect::Dial { generation });
    Deferred
}

fn flag(
    state: &mut SimState,
    form: Form,
    args: &str,
    name: &str,
    max: u8,
    get: fn(&mut SimState) -> &mut u8,
) -> Outcome {
    match form {
        Form::Read => ok(vec![format!("{name}: {}", *get(state))]),
        Form::Test => ok(vec![format!("{name}: (0-{max})")]),
        Form::Set => match args.trim().parse::<u8>() {
            Ok(v) if v <= max => {
                *get(state) = v;
                ok(vec![])
            }
            _ => cme(state, 50),
        },
        Form::Execute => error(),
    }
}

fn extended(
    state: &mut SimState,
    name: &str,
    form: Form,
    args: &str,
    reply: &mut Reply,
) -> Outcome {
    let f = fields(args);
    match (name, form) {
        ("+CPIN", Form::Read) => ok(vec![format!(
            "+CPIN: {}",
            match state.pin.state {
                PinState::Ready => "READY",
                PinState::SimPin => "SIM PIN",
                PinState::SimPuk => "SIM PUK",
            }
        )]),
        ("+CPIN", Form::Set) => {
            let Some(code) = text(&f, 0) else {
                return cme(state, 50);
            };
            match state.pin.state {
                PinState::Ready => ok(vec![]),
                PinState::SimPuk => cme(state, 12),
                PinState::SimPin if code == state.pin.code => {
                    state.pin.state = PinState::Ready;
                    state.pin.attempts_left = 3;
                    ok(vec![])
                }
                PinState::SimPin => {
                    state.pin.attempts_left = state.pin.attempts_left.saturating_sub(1);
                    if state.pin.attempts_left == 0 {
                        state.pin.state = PinState::SimPuk;
                        cme(state, 12)
                    } else {
                        cme(state, 16)
                    }
                }
            }
        }
        ("+CMEE", _) => flag(state, form, args, name, 2, |s| &mut s.cmee),
        ("+CGMI", Form::Execute) => ok(vec![state.cfg.manufacturer.clone()]),
        ("+CGMM", Form::Execute) => ok(vec![state.cfg.model.clone()]),
        ("+CSQ", Form::Execute) => ok(vec![format!("+CSQ: {},{}", state.signal_n, state.ber)]),
        ("+CSQ", Form::Test) => ok(vec!["+CSQ: (0-31,99),(0-7,99)".into()]),
        ("+CREG", Form::Read) => ok(vec![format!(
            "+CREG: {},{}",
            state.creg_mode, state.registration
        )]),
        ("+CREG", _) => flag(state, form, args, name, 2, |s| &mut s.creg_mode),
        ("+CRC", Form::Read) => ok(vec![format!("+CRC: {}", state.crc as u8)]),
        ("+CLIP", Form::Read) => ok(vec![format!("+CLIP: {},1", state.clip as u8)]),
        ("+CRC" | "+CLIP", Form::Set) => match args.trim() {
            v @ ("0" | "1") => {
                let on = v == "1";
                if name == "+CRC" {
                    state.crc = on
                } else {
                    state.clip = on
                }
                ok(vec![])
            }
            _ => cme(state, 50),
        },
        ("+CRC" | "+CLIP", Form::Test) => ok(vec![format!("{name}: (0,1)")]),
        ("+CNMI", Form::Read) => ok(vec![format!(
            "+CNMI: {},{},0,0,0",
            state.cnmi.0, state.cnmi.1
        )]),
        ("+CNMI", Form::Test) => ok(vec!["+CNMI: (0-2),(0-2),(0),(0),(0)".into()]),
        ("+CNMI", Form::Set) => match (int(&f, 0), int(&f, 1).or(Some(0))) {
            (Some(m @ 0..=2), Some(mt @ 0..=2)) => {
                state.cnmi = (m as u8, mt as u8);
                ok(vec![])
            }
            _ => cms(304),
        },
        ("+CMGF", _) => flag(state, form, args, name, 1, |s| &mut s.cmgf),
        ("+CSTA", Form::Read) => ok(vec![format!("+CSTA: {}", state.csta)]),
        ("+CSTA", Form::Test) => ok(vec!["+CSTA: (129,145)".into()]),
        ("+CSTA", Form::Set) => match int(&f, 0) {
            Some(v @ (129 | 145 | 161)) => {
                state.csta = v as u8;
                ok(vec![])
            }
            _ => cme(state, 50),
        },
        ("+CHUP", Form::Execute) => hangup(state, reply),
        ("+CLAC", Form::Execute) => ok(state
            .capabilities
            .iter()
            .map(|c| format!("AT{c}"))
            .collect()),
        ("+CMGS", Form::Set) => {
            if state.cmgf == 0 {
                match int(&f, 0) {
                    Some(n @ 1..=175) => Prompt(Pending::PduSubmit { len: n as usize }),
                    _ => cms(304),
                }
            } else {
                match text(&f, 0) {
                    Some(d) if !d.is_empty() => Prompt(Pending::TextSubmit { destination: d }),
                    _ => cms(304),
                }
            }
        }
        ("+CPMS", Form::Test) => ok(vec![r#"+CPMS: ("SM","ME"),("SM","ME"),("SM","ME")"#.into()]),
        ("+CPMS", Form::Read) => {
            let s = &state.sms[&state.sms_storage];
            let part = format!(
                "\"{}\",{},{}",
                state.sms_storage,
                s.entries.len(),
                s.capacity
            );
            ok(vec![format!("+CPMS: {part},{part},{part}")])
        }
        ("+CPMS", Form::Set) => {
            let Some(mem) = text(&f, 0).map(|m| m.to_ascii_uppercase()) else {
                return cms(304);
            };
            let Some(s) = state.sms.get(&mem) else {
                return cms(302);
            };
            let part = format!("{},{}", s.entries.len(), s.capacity);
            state.sms_storage = mem;
            ok(vec![format!("+CPMS: {part},{part},{part}")])
        }
        ("+CMGR", Form::Set) => {
            let Some(idx) = int(&f, 0) else {
                return cms(304);
            };
            let store = state
                .sms
                .get_mut(&state.sms_storage)
                .expect("selected store exists");
            match store.entries.get_mut(&(idx as u32)) {
                Some(e) => {
                    let lines = vec![
                        format!("+CMGR: {},,{}", e.stat, tpdu_len(&e.pdu_hex)),
                        e.pdu_hex.clone(),
                    ];
                    if e.stat == 0 {
                        e.stat = 1;
                    }
                    ok(lines)
                }
                None => cms(321),
            }
        }
        ("+CMGL", Form::Test) => ok(vec!["+CMGL: (0-4)".into()]),
        ("+CMGL", Form::Set | Form::Execute) => {
            let stat = match f.first().cloned().flatten() {
                None => 0,
                Some(s) => match s.to_ascii_uppercase().as_str() {
                    "REC UNREAD" => 0,
                    "REC READ" => 1,
                    "STO UNSENT" => 2,
                    "STO SENT" => 3,
                    "ALL" => 4,
                    n => match n.parse::<u8>() {
                        Ok(v @ 0..=4) => v,
                        _ => return cms(304),
                    },
                },
            };
            let store = state
                .sms
                .get_mut(&state.sms_storage)
                .expect("selected store exists");
            let mut lines = Vec::new();
            for (idx, e) in store.entries.iter_mut() {
                if stat == 4 || e.stat == stat {
                    lines.push(format!("+CMGL: {idx},{},,{}", e.stat, tpdu_len(&e.pdu_hex)));
                    lines.push(e.pdu_hex.clone());
                    if e.stat == 0 {
                        e.stat = 1;
                    }
                }
            }
            ok(lines)
        }
        ("+CMGD", Form::Test) => ok(vec!["+CMGD: (1-255),(0-4)".into()]),
        ("+CMGD", Form::Set) => {
            let idx = int(&f, 0).unwrap_or(0) as u32;
            let delflag = int(&f, 1).unwrap_or(0);
            let store = state
                .sms
                .get_mut(&state.sms_storage)
                .expect("selected store exists");
            match delflag {
                0 => {
                    if store.entries.remove(&idx).is_none() {
                        return cms(321);
                    }
                }
                1..=4 => store.entries.retain(|_, e| match delflag {
                    1 => e.stat != 1,
                    2 => !matches!(e.stat, 1 | 3),
                    3 => e.stat == 0,
                    _ => false,
                }),
                _ => return cms(304),
            }
            ok(vec![])
        }
        ("+CPBS", Form::Test) => ok(vec![r#"+CPBS: ("SM","ME")"#.into()]),
        ("+CPBS", Form::Read) => {
            let p = &state.phonebook[&state.pb_storage];
            ok(vec![format!(
                "+CPBS: \"{}\",{},{}",
                state.pb_storage,
                p.entries.len(),
                p.capacity
            )])
        }
        ("+CPBS", Form::Set) => {
            let mem = text(&f, 0).unwrap_or_default().to_ascii_uppercase();
            if !state.phonebook.contains_key(&mem) {
                return cme(state, 3);
            }
            state.pb_storage = mem;
            ok(vec![])
        }
        ("+CPBR", Form::Test) => {
            let cap = state.phonebook[&state.pb_storage].capacity;
            ok(vec![format!(
                "+CPBR: (1-{cap}),{},{}",
                state.cfg.number_len, state.cfg.text_len
            )])
        }
        ("+CPBR", Form::Set) => {
            let cap = state.phonebook[&state.pb_storage].capacity as i64;
            let Some(first) = int(&f, 0) else {
                return cme(state, 50);
            };
            let last = int(&f, 1).unwrap_or(first);
            if first < 1 || last < first || last > cap {
                return cme(state, 21);
            }
            let p = &state.phonebook[&state.pb_storage];
            ok(p.entries
                .range(first as u32..=last as u32)
                .map(|(i, e)| pb_line("+CPBR", *i, e))
                .collect())
        }
        ("+CPBW", Form::Test) => {
            let cap = state.phonebook[&state.pb_storage].capacity;
            ok(vec![format!(
                "+CPBW: (1-{cap}),{},(129,145),{}",
                state.cfg.number_len, state.cfg.text_len
            )])
        }
        ("+CPBW", Form::Set) => phonebook_write(state, &f),
        ("+CPBF", Form::Test) => ok(vec![format!(
            "+CPBF: {},{}",
            state.cfg.number_len, state.cfg.text_len
        )]),
        ("+CPBF", Form::Set) => {
            let needle = text(&f, 0).unwrap_or_default().to_lowercase();
            let p = &state.phonebook[&state.pb_storage];
            let hits: Vec<String> = p
                .entries
                .iter()
                .filter(|(_, e)| e.text.to_lowercase().starts_with(&needle))
                .map(|(i, e)| pb_line("+CPBF", *i, e))
                .collect();
            if hits.is_empty() {
                cme(state, 22)
            } else {
                ok(hits)
            }
        }
        ("+CSIM", Form::Test) => ok(vec![]),
        ("+CSIM", Form::Set) => {
            let (Some(len), Some(apdu)) = (int(&f, 0), text(&f, 1)) else {
                return cme(state, 50);
            };
            if len as usize != apdu.len()
                || apdu.len() % 2 != 0
                || !apdu.chars().all(|c| c.is_ascii_hexdigit())
            {
                return cme(state, 50);
            }
            let resp = state
                .apdu_table
                .get(&apdu.to_ascii_uppercase())
                .cloned()
                .unwrap_or_else(|| "6D00".into());
            ok(vec![format!("+CSIM: {},\"{resp}\"", resp.len())])
        }
        ("+CRSM", Form::Test) => ok(vec![]),
        ("+CRSM", Form::Set) => match int(&f, 0) {
            Some(_) => ok(vec!["+CRSM: 144,0".into()]),
            None => cme(state, 50),
        },
        (_, Form::Test) => ok(vec![]),
        _ => error(),
    }
}

fn pb_line(prefix: &str, index: u32, e: &PbEntry) -> String {
    format!(
        "{prefix}: {index},\"{}\",{},\"{}\"",
        e.number, e.ton, e.text
    )
}

fn phonebook_write(state: &mut SimState, f: &[Option<String>]) -> Outcome {
    let cap = state.phonebook[&state.pb_storage].capacity;
    let index = int(f, 0);
    let number = text(f, 1);
    let Some(number) = number else {
        // index only: delete
        let Some(i) = index else {
            return cme(state, 50);
        };
        if i < 1 || i > cap as i64 {
            return cme(state, 21);
        }
        state
            .phonebook
            .get_mut(&state.pb_storage)
            .unwrap()
            .entries
            .remove(&(i as u32));
        return ok(vec![]);
    };
    let entry_text = text(f, 3).unwrap_or_default();
    if entry_text.chars().count() > state.cfg.text_len as usize {
        return cme(state, 24);
    }
    let (digits, mut ton) = match number.strip_prefix('+') {
        Some(d) => (d.to_owned(), 145u8),
        None => (number.clone(), 129u8),
    };
    if let Some(t) = int(f, 2) {
        if t == 145 || t == 129 || t == 161 {
            ton = t as u8;
        } else {
            return cme(state, 50);
        }
    }
    if digits.len() > state.cfg.number_len as usize {
        return cme(state, 26);
    }
    if !digits
        .chars()
        .all(|c| c.is_ascii_digit() || c == '*' || c == '#')
    {
        return cme(state, 50);
    }
    let book = state.phonebook.get_mut(&state.pb_storage).unwrap();
    let idx = match index {
        Some(i) if i < 1 || i > cap as i64 => return cme(state, 21),
        Some(i) => i as u32,
        None => match (1..=cap).find(|i| !book.entries.contains_key(i)) {
            Some(i) => i,
            None => return cme(state, 20),
        },
    };
    book.entries.insert(
        idx,
        PbEntry {
            number: digits,
            ton,
            text: entry_text,
        },
    );
    ok(vec![format!("+CPBW: {idx}")])
}

fn tpdu_len(pdu_hex: &str) -> usize {
    let smsc = usize::from_str_radix(pdu_hex.get(..2).unwrap_or("00"), 16).unwrap_or(0);
    (pdu_hex.len() / 2).saturating_sub(1 + smsc)
}

/// Completes a prompted submission. `body` is None when the DTE sent ESC.
pub fn handle_payload(state: &mut SimState, pending: Pending, body: Option<&[u8]>) -> Reply {
    let reply = Reply::default();
    let Some(body) = body else {
        return reply.lines(vec!["OK".into()]);
    };
    let body = String::from_utf8_lossy(body).trim().to_owned();
    let fin = |lines: Vec<String>| Reply::default().lines(lines);
    if !state.is_registered() {
        return fin(vec!["+CMS ERROR: 331".into()]);
    }
    let record = match pending {
        Pending::PduSubmit { len } => {
            let decoded = oracle::parse_submit(&body);
            match &decoded {
                Some(d) if d.tpdu_len == len => {}
                _ => return fin(vec!["+CMS ERROR: 304".into()]),
            }
            SubmitRecord {
                pdu: body.to_ascii_uppercase(),
                mode: "pdu",
                decoded,
                message_ref: state.next_mr,
            }
        }
        Pending::TextSubmit { destination } => SubmitRecord {
            decoded: Some(Submit {
                message_ref: state.next_mr,
                destination,
                dcs: 0,
                validity: None,
                concat: None,
                text: body.clone(),
                tpdu_len: 0,
            }),
            pdu: body,
            mode: "text",
            message_ref: state.next_mr,
        },
    };
    let mr = record.message_ref;
    state.submits.push(record);
    state.next_mr = state.next_mr.wrapping_add(1);
    fin(vec![format!("+CMGS: {mr}"), "OK".into()])
}

/// Stores an incoming SMS-DELIVER and returns its index, or None when the
/// store is full.
pub fn store_incoming(state: &mut SimState, storage: &str, pdu_hex: String) -> Option<u32> {
    let store = state.sms.get_mut(storage)?;
    let idx = store.free_index()?;
    store.entries.insert(idx, StoredPdu { pdu_hex, stat: 0 });
    Some(idx)
}
