use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::AtError;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);
pub const LONG_TIMEOUT: Duration = Duration::from_secs(30);

/// One argument of a set command.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Arg {
    /// Rendered double-quoted.
    Str(String),
    Int(i64),
    /// Unquoted, non-numeric token such as `ALL`.
    Token(String),
    /// Omitted positional parameter.
    Empty,
}

impl From<&str> for Arg {
    fn from(s: &str) -> Self {
        Arg::Str(s.to_owned())
    }
}

impl From<String> for Arg {
    fn from(s: String) -> Self {
        Arg::Str(s)
    }
}

impl From<i64> for Arg {
    fn from(v: i64) -> Self {
        Arg::Int(v)
    }
}

impl From<u32> for Arg {
    fn from(v: u32) -> Self {
        Arg::Int(v as i64)
    }
}

impl From<usize> for Arg {
    fn from(v: usize) -> Self {
        Arg::Int(v as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CommandKind {
    Execute,
    Read,
    Test,
    Set(Vec<Arg>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AtCommand {
    pub name: String,
    pub kind: CommandKind,
    pub timeout: Duration,
    pub expects_prompt: bool,
}

impl AtCommand {
    fn new(name: &str, kind: CommandKind) -> Self {
        AtCommand {
            timeout: default_timeout(name),
            name: name.to_owned(),
            kind,
            expects_prompt: false,
        }
    }

    pub fn execute(name: &str) -> Self {
        Self::new(name, CommandKind::Execute)
    }

    pub fn read(name: &str) -> Self {
        Self::new(name, CommandKind::Read)
    }

    pub fn test(name: &str) -> Self {
        Self::new(name, CommandKind::Test)
    }

    pub fn set<I, A>(name: &str, args: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<Arg>,
    {
        Self::new(
            name,
            CommandKind::Set(args.into_iter().map(Into::into).collect()),
        )
    }

    /// `ATD<dial string>;`. The trailing semicolon selects a voice call.
    pub fn dial(dial_string: &str) -> Self {
        Self::execute(&format!("D{dial_string};"))
    }

    pub fn with_prompt(mut self) -> Self {
        self.expects_prompt = true;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn validate(&self) -> Result<(), AtError> {
        if self.name.is_empty() {
            return Err(AtError::InvalidArgument("empty command name".into()));
        }
        if let Some(c) = self
            .name
            .chars()
            .find(|c| !c.is_ascii_graphic() || matches!(c, '=' | '?' | '"'))
        {
            return Err(AtError::InvalidArgument(format!(
                "command name contains {c:?}"
            )));
        }
        if self.timeout.is_zero() {
            return Err(AtError::InvalidArgument("zero timeout".into()));
        }
        if let CommandKind::Set(args) = &self.kind {
            if args.is_empty() {
                return Err(AtError::InvalidArgument(
                    "set command without arguments".into(),
                ));
            }
            for arg in args {
                match arg {
                    Arg::Str(s) => {
                        if s.contains(['\r', '\n', '"']) {
                            return Err(AtError::InvalidArgument(format!(
                                "bad string argument {s:?}"
                            )));
                        }
                    }
                    Arg::Token(t) => {
                        if t.is_empty()
                            || t.parse::<i64>().is_ok()
                            || t.contains(['\r', '\n', '"', ','])
                            || !t.chars().all(|c| c.is_ascii_graphic())
                        {
                            return Err(AtError::InvalidArgument(format!("bad token {t:?}")));
                        }
                    }
                    Arg::Int(_) | Arg::Empty => {}
                }
            }
        }
        Ok(())
    }

    /// Command text without the trailing CR.
    pub fn body(&self) -> String {
        let mut out = String::with_capacity(16 + self.name.len());
        out.push_str("AT");
        out.push_str(&self.name);
        match &self.kind {
            CommandKind::Execute => {}
            CommandKind::Read => out.push('?'),
            CommandKind::Test => out.push_str("=?"),
            CommandKind::Set(args) => {
                out.push('=');
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    match arg {
                        Arg::Str(s) => {
                            out.push('"');
                            out.push_str(s);
                            out.push('"');
                        }
                        Arg::Int(v) => out.push_str(&v.to_string()),
                        Arg::Token(t) => out.push_str(t),
                        Arg::Empty => {}
                    }
                }
            }
        }
        out
    }
}

/// Serializes a command to the bytes sent on the wire: `AT...` and a lone CR.
pub fn serialize(cmd: &AtCommand) -> Result<Vec<u8>, AtError> {
    cmd.validate()?;
    let mut bytes = cmd.body().into_bytes();
    bytes.push(b'\r');
    Ok(bytes)
}

fn default_timeout(name: &str) -> Duration {
    let upper = name.to_ascii_uppercase();
    if upper.starts_with('D')
        || upper == "A"
        || matches!(
            upper.as_str(),
            "+COPS" | "+CREG" | "+CGATT" | "+CMGS" | "+CLAC"
        )
    {
        LONG_TIMEOUT
    } else {
        DEFAULT_TIMEOUT
    }
}

impl fmt::Display for AtCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.body())
    }
}

/// Splits a comma-separated argument list, honouring double quotes.
pub fn split_args(s: &str) -> Result<Vec<Arg>, AtError> {
    let mut args = Vec::new();
    let mut chars = s.chars().peekable();
    loop {
        while chars.peek() == Some(&' ') {
            chars.next();
        }
        match chars.peek() {
            Some('"') => {
                chars.next();
                let mut v = String::new();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some(c) => v.push(c),
                        None => return Err(AtError::InvalidArgument("unbalanced quotes".into())),
                    }
                }
                args.push(Arg::Str(v));
                while chars.peek() == Some(&' ') {
                    chars.next();
                }
                match chars.next() {
                    None => break,
                    Some(',') => continue,
                    Some(c) => {
                        return Err(AtError::InvalidArgument(format!(
                            "unexpected {c:?} after string"
                        )))
                    }
                }
            }
            _ => {
                let mut v = String::new();
                let mut end = true;
                for c in chars.by_ref() {
                    if c == ',' {
                        end = false;
                        break;
                    }
                    if c == '"' {
                        return Err(AtError::InvalidArgument("unbalanced quotes".into()));
                    }
                    v.push(c);
                }
                let v = v.trim();
                args.push(if v.is_empty() {
                    Arg::Empty
                } else if let Ok(n) = v.parse::<i64>() {
                    Arg::Int(n)
                } else {
                    Arg::Token(v.to_owned())
                });
                if end {
                    break;
                }
            }
        }
    }
    Ok(args)
}

impl FromStr for AtCommand {
    type Err = AtError;

    /// Accepts `AT+CMD=..`, `+CMD?`, `E0` and similar forms.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim_end_matches(['\r', '\n']).trim();
        let s = if s.len() >= 2 && s.as_bytes()[..2].eq_ignore_ascii_case(b"AT") {
            &s[2..]
        } else {
            s
        };
        let cmd = if let Some(name) = s.strip_suffix("=?") {
            AtCommand::test(name)
        } else if let Some((name, args)) = s.split_once('=') {
            AtCommand::new(name, CommandKind::Set(split_args(args)?))
        } else if let Some(name) = s.strip_suffix('?') {
            AtCommand::read(name)
        } else {
            AtCommand::execute(s)
        };
        cmd.validate()?;
        Ok(cmd)
    }
}

impl Serialize for AtCommand {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.body())
    }
}

impl<'de> Deserialize<'de> for AtCommand {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
