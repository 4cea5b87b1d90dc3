//! WSP value encodings used by MMS headers: uintvar, short/long integers,
//! value-length, text strings and content types.

use super::MmsError;

pub const QUOTE: u8 = 0x7F;
pub const QUOTED_STRING: u8 = 0x22;
pub const LENGTH_QUOTE: u8 = 31;
pub const CHARSET_UTF8: u64 = 106;

/// Well-known content types (subset of the WSP assigned numbers).
pub const CONTENT_TYPES: &[(u8, &str)] = &[
    (0x02, "text/html"),
    (0x03, "text/plain"),
    (0x0C, "multipart/mixed"),
    (0x1D, "image/gif"),
    (0x1E, "image/jpeg"),
    (0x20, "image/png"),
    (0x21, "image/vnd.wap.wbmp"),
    (0x23, "application/vnd.wap.multipart.mixed"),
    (0x26, "application/vnd.wap.multipart.alternative"),
    (0x33, "application/vnd.wap.multipart.related"),
    (0x3E, "application/vnd.wap.mms-message"),
];

pub fn is_multipart(content_type: &str) -> bool {
    let media = content_type.split(';').next().unwrap_or("").trim();
    media.starts_with("multipart/") || media.starts_with("application/vnd.wap.multipart.")
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos.min(self.buf.len())..]
    }

    pub fn peek(&self) -> Result<u8, MmsError> {
        self.buf.get(self.pos).copied().ok_or(MmsError::Truncated)
    }

    pub fn byte(&mut self) -> Result<u8, MmsError> {
        let b = self.peek()?;
        self.pos += 1;
        Ok(b)
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], MmsError> {
        let end = self.pos.checked_add(n).ok_or(MmsError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(MmsError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    pub fn uintvar(&mut self) -> Result<u64, MmsError> {
        let mut v: u64 = 0;
        for _ in 0..5 {
            let b = self.byte()?;
            v = (v << 7) | (b & 0x7F) as u64;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(MmsError::Malformed("uintvar longer than 5 octets".into()))
    }

    pub fn value_length(&mut self) -> Result<usize, MmsError> {
        let b = self.byte()?;
        match b {
            0..=30 => Ok(b as usize),
            LENGTH_QUOTE => Ok(self.uintvar()? as usize),
            _ => Err(MmsError::Malformed(format!(
                "expected value-length, got 0x{b:02X}"
            ))),
        }
    }

    pub fn short_integer(&mut self) -> Result<u8, MmsError> {
        let b = self.byte()?;
        if b & 0x80 == 0 {
            return Err(MmsError::Malformed(format!(
                "expected short-integer, got 0x{b:02X}"
            )));
        }
        Ok(b & 0x7F)
    }

    pub fn long_integer(&mut self) -> Result<u64, MmsError> {
        let len = self.byte()? as usize;
        if len == 0 || len > 8 {
            return Err(MmsError::Malformed(format!("long-integer length {len}")));
        }
        Ok(self
            .take(len)?
            .iter()
            .fold(0u64, |acc, &b| (acc << 8) | b as u64))
    }

    /// Short-integer or long-integer.
    pub fn integer(&mut self) -> Result<u64, MmsError> {
        if self.peek()? & 0x80 != 0 {
            Ok(self.short_integer()? as u64)
        } else {
            self.long_integer()
        }
    }

    pub fn text(&mut self) -> Result<String, MmsError> {
        if self.peek()? == QUOTE {
            self.pos += 1;
        }
        let rest = self.rest();
        let nul = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or(MmsError::Truncated)?;
        let s = String::from_utf8_lossy(&rest[..nul]).into_owned();
        self.pos += nul + 1;
        Ok(s)
    }

    pub fn quoted_string(&mut self) -> Result<String, MmsError> {
        if self.peek()? == QUOTED_STRING {
            self.pos += 1;
        }
        self.text()
    }

    /// Text-string, or value-length + charset + text-string.
    pub fn encoded_string(&mut self) -> Result<String, MmsError> {
        let b = self.peek()?;
        if b == 0 {
            self.pos += 1;
            return Ok(String::new());
        }
        if b <= LENGTH_QUOTE {
            let len = self.value_length()?;
            let mut inner = Reader::new(self.take(len)?);
            let _charset = inner.integer()?;
            inner.text()
        } else {
            self.text()
        }
    }

    /// Raw bytes of one value of any encoding, used to preserve headers this
    /// codec does not interpret.
    pub fn any_value(&mut self) -> Result<&'a [u8], MmsError> {
        let start = self.pos;
        let b = self.peek()?;
        match b {
            0..=30 => {
                self.pos += 1;
                self.take(b as usize)?;
            }
            LENGTH_QUOTE => {
                self.pos += 1;
                let n = self.uintvar()? as usize;
                self.take(n)?;
            }
            32..=127 => {
                self.text()?;
            }
            _ => self.pos += 1,
        }
        Ok(&self.buf[start..self.pos])
    }

    /// Content-type value as `media[; name=value]*`.
    pub fn content_type(&mut self) -> Result<String, MmsError> {
        let b = self.peek()?;
        if b & 0x80 != 0 {
            return Ok(well_known_type(self.short_integer()?));
        }
        if b > LENGTH_QUOTE {
            return self.text();
        }
        let len = self.value_length()?;
        let mut inner = Reader::new(self.take(len)?);
        let mut out = if inner.peek()? & 0x80 != 0 {
            well_known_type(inner.short_integer()?)
        } else if inner.peek()? <= LENGTH_QUOTE {
            // media given as integer via long form
            let v = inner.integer()?;
            well_known_type(v as u8)
        } else {
            inner.text()?
        };
        while !inner.is_empty() {
            let (name, value) = inner.parameter()?;
            out.push_str("; ");
            out.push_str(&name);
            out.push('=');
            out.push_str(&value);
        }
        Ok(out)
    }

    fn parameter(&mut self) -> Result<(String, String), MmsError> {
        let b = self.peek()?;
        if b & 0x80 != 0 {
            let code = self.short_integer()?;
            let name = match code {
                0x01 => "charset",
                0x03 => "type",
                0x05 | 0x17 => "name",
                0x06 | 0x18 => "filename",
                0x09 => "type",
                0x0A => "start",
                0x0B => "start-info",
                _ => "",
            };
            let value = match code {
                0x01 => {
                    let v = if self.peek()? == 0x80 {
                        self.byte()?;
                        0
                    } else {
                        self.integer()?
                    };
                    if v == CHARSET_UTF8 {
                        "utf-8".to_owned()
                    } else {
                        v.to_string()
                    }
                }
                0x03 => self.integer()?.to_string(),
                0x09 => {
                    if self.peek()? & 0x80 != 0 {
                        well_known_type(self.short_integer()?)
                    } else {
                        self.text()?
                    }
                }
                0x05 | 0x06 | 0x0A | 0x0B | 0x17 | 0x18 => self.text()?,
                _ => {
                    let raw = self.any_value()?;
                    hex::encode(raw)
                }
            };
            let name = if name.is_empty() {
                format!("x-param-{code:02x}")
            } else {
                name.to_owned()
            };
            Ok((name, value))
        } else {
            let name = self.text()?;
            let value = match self.peek()? {
                0 => {
                    self.byte()?;
                    String::new()
                }
                b if b & 0x80 != 0 || b <= LENGTH_QUOTE => self.integer()?.to_string(),
                _ => self.quoted_string()?,
            };
            Ok((name, value))
        }
    }
}

fn well_known_type(code: u8) -> String {
    CONTENT_TYPES
        .iter()
        .find(|(c, _)| *c == code)
        .map(|(_, s)| s.to_string())
        .unwrap_or_else(|| format!("application/x-wsp-{code:02x}"))
}

#[derive(Default)]
pub struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn byte(&mut self, b: u8) {
        self.buf.push(b);
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn uintvar(&mut self, mut v: u64) {
        let mut tmp = [0u8; 10];
        let mut i = tmp.len();
        loop {
            i -= 1;
            tmp[i] = (v & 0x7F) as u8 | if i == tmp.len() - 1 { 0 } else { 0x80 };
            v >>= 7;
            if v == 0 {
                break;
            }
        }
        self.buf.extend_from_slice(&tmp[i..]);
    }

    pub fn value_length(&mut self, len: usize) {
        if len <= 30 {
            self.buf.push(len as u8);
        } else {
            self.buf.push(LENGTH_QUOTE);
            self.uintvar(len as u64);
        }
    }

    pub fn short_integer(&mut self, v: u8) {
        debug_assert!(v < 0x80);
        self.buf.push(0x80 | v);
    }

    pub fn long_integer(&mut self, v: u64) {
        let bytes = v.to_be_bytes();
        let skip = bytes.iter().take_while(|&&b| b == 0).count().min(7);
        self.buf.push((8 - skip) as u8);
        self.buf.extend_from_slice(&bytes[skip..]);
    }

    pub fn integer(&mut self, v: u64) {
        if v < 0x80 {
            self.short_integer(v as u8);
        } else {
            self.long_integer(v);
        }
    }

    pub fn text(&mut self, s: &str) {
        if s.as_bytes().first().is_some_and(|&b| b >= 0x80) {
            self.buf.push(QUOTE);
        }
        self.buf.extend_from_slice(s.as_bytes());
        self.buf.push(0);
    }

    pub fn quoted_string(&mut self, s: &str) {
        self.buf.push(QUOTED_STRING);
        self.buf.extend_from_slice(s.as_bytes());
        self.buf.push(0);
    }

    /// Plain text-string for ASCII, charset-tagged UTF-8 otherwise.
    pub fn encoded_string(&mut self, s: &str) {
        if s.is_ascii() {
            self.text(s);
        } else {
            let mut inner = Writer::new();
            inner.integer(CHARSET_UTF8);
            inner.text(s);
            self.value_length(inner.buf.len());
            self.bytes(&inner.buf);
        }
    }

    pub fn content_type(&mut self, content_type: &str) {
        let mut pieces = content_type.split(';').map(str::trim);
        let media = pieces.next().unwrap_or("");
        let params: Vec<(&str, &str)> = pieces
            .filter(|p| !p.is_empty())
            .map(|p| p.split_once('=').unwrap_or((p, "")))
            .collect();
        let code = CONTENT_TYPES
            .iter()
            .find(|(_, s)| *s == media)
            .map(|(c, _)| *c);
        if params.is_empty() {
            match code {
                Some(c) => self.short_integer(c),
                None => self.text(media),
            }
            return;
        }
        let mut inner = Writer::new();
        match code {
            Some(c) => inner.short_integer(c),
            None => inner.text(media),
        }
        for (name, value) in params {
            inner.text(name.trim());
            let value = value.trim().trim_matches('"');
            if value.is_empty() {
                inner.byte(0);
            } else {
                inner.quoted_string(value);
            }
        }
        self.value_length(inner.buf.len());
        self.bytes(&inner.buf);
    }
}
