use serde::{Deserialize, Serialize};

use super::{ModemServices, Service, ServiceError};
use crate::at::{command::split_args, Arg, AtCommand};

pub const TYPE_INTERNATIONAL: i64 = 145;
pub const TYPE_UNKNOWN: i64 = 129;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhonebookEntry {
    pub index: u32,
    pub number: String,
    pub text: String,
}

/// Limits reported by `+CPBR=?`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhonebookInfo {
    pub first: u32,
    pub last: u32,
    pub number_len: Option<u32>,
    pub text_len: Option<u32>,
}

/// Parses `(1-250),40,18`.
pub fn parse_cpbr_test(values: &str) -> Option<PhonebookInfo> {
    let (range, rest) = match values.split_once(')') {
        Some((r, rest)) => (r.trim_start_matches('('), rest.trim_start_matches(',')),
        None => (values, ""),
    };
    let (first, last) = range.split_once('-')?;
    let mut rest = rest.split(',').map(|v| v.trim().parse::<u32>().ok());
    Some(PhonebookInfo {
        first: first.trim().parse().ok()?,
        last: last.trim().parse().ok()?,
        number_len: rest.next().flatten(),
        text_len: rest.next().flatten(),
    })
}

/// Parses `<index>,"<number>",<type>,"<text>"` from +CPBR/+CPBF.
pub fn parse_entry(values: &str) -> Option<PhonebookEntry> {
    let args = split_args(values).ok()?;
    let index = match args.first()? {
        Arg::Int(i) if *i > 0 => *i as u32,
        _ => return None,
    };
    let number = match args.get(1)? {
        Arg::Str(s) => s.clone(),
        _ => return None,
    };
    let ty = match args.get(2) {
        Some(Arg::Int(t)) => *t,
        _ => TYPE_UNKNOWN,
    };
    let text = match args.get(3) {
        Some(Arg::Str(s)) => s.clone(),
        _ => String::new(),
    };
    let number = if ty == TYPE_INTERNATIONAL && !number.starts_with('+') {
        format!("+{number}")
    } else {
        number
    };
    Some(PhonebookEntry {
        index,
        number,
        text,
    })
}

fn validate_number(number: &str) -> Result<(), ServiceError> {
    let digits = number.strip_prefix('+').unwrap_or(number);
    if digits.is_empty()
        || digits.len() > 20
        || !digits
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '*' | '#'))
    {
        return Err(ServiceError::InvalidArgument(format!(
            "invalid number {number:?}"
        )));
    }
    Ok(())
}

impl ModemServices {
    pub async fn phonebook_select(&self, storage: &str) -> Result<(), ServiceError> {
        self.require(Service::Phonebook)?;
        let mem = storage.to_ascii_uppercase();
        if !matches!(
            mem.as_str(),
            "SM" | "ME" | "MT" | "FD" | "ON" | "LD" | "DC" | "RC" | "MC" | "EN"
        ) {
            return Err(ServiceError::InvalidArgument(format!(
                "unknown phonebook storage {storage:?}"
            )));
        }
        self.cmd(AtCommand::set("+CPBS", [mem.as_str()])).await?;
        Ok(())
    }

    pub async fn phonebook_info(&self) -> Result<PhonebookInfo, ServiceError> {
        self.require(Service::Phonebook)?;
        let r = self.cmd(AtCommand::test("+CPBR")).await?;
        r.first("+CPBR")
            .and_then(|l| parse_cpbr_test(&l.raw_values))
            .ok_or_else(|| ServiceError::CommandFailed("+CPBR=? (unparseable)".into()))
    }

    pub async fn phonebook_read(
        &self,
        first: u32,
        last: Option<u32>,
    ) -> Result<Vec<PhonebookEntry>, ServiceError> {
        self.require(Service::Phonebook)?;
        let cmd = match last {
            Some(l) => AtCommand::set("+CPBR", [first, l]),
            None => AtCommand::set("+CPBR", [first]),
        };
        let r = self.cmd(cmd).await?;
        Ok(r.with_prefix("+CPBR")
            .filter_map(|l| parse_entry(&l.raw_values))
            .collect())
    }

    pub async fn phonebook_read_all(&self) -> Result<Vec<PhonebookEntry>, ServiceError> {
        let info = self.phonebook_info().await?;
        self.phonebook_read(info.first, Some(info.last)).await
    }

    /// Writes an entry; `index` None stores at the first free slot. Returns
    /// the index used when the modem reports it.
    pub async fn phonebook_write(
        &self,
        index: Option<u32>,
        number: &str,
        text: &str,
    ) -> Result<Option<u32>, ServiceError> {
        self.require(Service::Phonebook)?;
        validate_number(number)?;
        if text.contains(['"', '\r', '\n']) {
            return Err(ServiceError::InvalidArgument(
                "text contains quotes or line breaks".into(),
            ));
        }
        let ty = if number.starts_with('+') {
            TYPE_INTERNATIONAL
        } else {
            TYPE_UNKNOWN
        };
        let idx = index.map(|i| Arg::Int(i as i64)).unwrap_or(Arg::Empty);
        let r = self
            .cmd(AtCommand::set(
                "+CPBW",
                [idx, number.into(), Arg::Int(ty), text.into()],
            ))
            .await?;
        Ok(r.first("+CPBW")
            .and_then(|l| l.raw_values.trim().parse().ok())
            .or(index))
    }

    pub async fn phonebook_delete(&self, index: u32) -> Result<(), ServiceError> {
        self.require(Service::Phonebook)?;
        self.cmd(AtCommand::set("+CPBW", [index])).await?;
        Ok(())
    }

    pub async fn phonebook_find(&self, prefix: &str) -> Result<Vec<PhonebookEntry>, ServiceError> {
        self.require(Service::Phonebook)?;
        if prefix.contains(['"', '\r', '\n']) {
            return Err(ServiceError::InvalidArgument(
                "search text contains quotes".into(),
            ));
        }
        match self.cmd(AtCommand::set("+CPBF", [prefix])).await {
            Ok(r) => Ok(r
                .with_prefix("+CPBF")
                .filter_map(|l| parse_entry(&l.raw_values))
                .collect()),
            Err(ServiceError::Cme(22)) => Ok(Vec::new()),
            Err(e) => Err(e),
        }
    }
}
