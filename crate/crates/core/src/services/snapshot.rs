use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::messages::{MessageFilter, StoredSms};
use super::phonebook::PhonebookEntry;
use super::{ModemServices, Service, ServiceError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSnapshot {
    pub taken_at: DateTime<Utc>,
    pub phonebook: Vec<PhonebookEntry>,
    /// Messages per store name.
    pub messages: BTreeMap<String, Vec<StoredSms>>,
    /// Names of media blobs. Standard AT commands expose no media store, so
    /// this stays empty for real modems.
    pub media: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SyncEdit {
    AddContact {
        number: String,
        text: String,
    },
    UpdateContact {
        index: u32,
        number: String,
        text: String,
    },
    DeleteContact {
        index: u32,
    },
    DeleteMessage {
        storage: String,
        index: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOutcome {
    Applied,
    Conflict,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditResult {
    pub edit: SyncEdit,
    pub outcome: EditOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Contact {
    pub number: String,
    pub text: String,
}

/// Edits that bring the phonebook in line with an external contact list:
/// one add per contact not already present (same number and text).
pub fn diff(snapshot: &DataSnapshot, contacts: &[Contact]) -> Vec<SyncEdit> {
    let present: HashSet<(&str, &str)> = snapshot
        .phonebook
        .iter()
        .map(|e| (e.number.as_str(), e.text.as_str()))
        .collect();
    let mut seen = HashSet::new();
    contacts
        .iter()
        .filter(|c| !present.contains(&(c.number.as_str(), c.text.as_str())))
        .filter(|c| seen.insert((c.number.clone(), c.text.clone())))
        .map(|c| SyncEdit::AddContact {
            number: c.number.clone(),
            text: c.text.clone(),
        })
        .collect()
}

pub const MESSAGE_STORES: &[&str] = &["SM", "ME"];

impl ModemServices {
    pub async fn snapshot(&self) -> Result<DataSnapshot, ServiceError> {
        let phonebook = if self.require(Service::Phonebook).is_ok() {
            self.phonebook_read_all().await?
        } else {
            Vec::new()
        };
        let mut messages = BTreeMap::new();
        if self.require(Service::Sms).is_ok() {
            for store in MESSAGE_STORES {
                match self.list_messages(store, MessageFilter::All).await {
                    Ok(list) => {
                        messages.insert(store.to_string(), list);
                    }
                    Err(ServiceError::InvalidArgument(_))
                    | Err(ServiceError::Cms(_))
                    | Err(ServiceError::CommandFailed(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(DataSnapshot {
            taken_at: Utc::now(),
            phonebook,
            messages,
            media: Vec::new(),
        })
    }

    /// Applies edits against the state recorded in `snapshot`. An update or
    /// delete whose target changed on the modem since the snapshot is
    /// reported as a conflict and not applied.
    pub async fn sync(&self, snapshot: &DataSnapshot, edits: &[SyncEdit]) -> Vec<EditResult> {
        let mut results = Vec::with_capacity(edits.len());
        for edit in edits {
            results.push(self.apply(snapshot, edit).await);
        }
        results
    }

    async fn current_entry(&self, index: u32) -> Result<Option<PhonebookEntry>, ServiceError> {
        match self.phonebook_read(index, None).await {
            Ok(v) => Ok(v.into_iter().find(|e| e.index == index)),
            Err(ServiceError::InvalidIndex) | Err(ServiceError::Cme(22)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    async fn apply(&self, snapshot: &DataSnapshot, edit: &SyncEdit) -> EditResult {
        let result = |outcome, index, detail: Option<String>| EditResult {
            edit: edit.clone(),
            outcome,
            index,
            detail,
        };
        let fail = |index, e: ServiceError| result(EditOutcome::Failed, index, Some(e.to_string()));
        match edit {
            SyncEdit::AddContact { number, text } => {
                match self.phonebook_write(None, number, text).await {
                    Ok(idx) => result(EditOutcome::Applied, idx, None),
                    Err(e) => fail(None, e),
                }
            }
            SyncEdit::UpdateContact { index, .. } | SyncEdit::DeleteContact { index } => {
                let expected = snapshot.phonebook.iter().find(|e| e.index == *index);
                let current = match self.current_entry(*index).await {
                    Ok(c) => c,
                    Err(e) => return fail(Some(*index), e),
                };
                if current.as_ref() != expected {
                    return result(
                        EditOutcome::Conflict,
                        Some(*index),
                        Some("entry changed since snapshot".into()),
                    );
                }
                let r = match edit {
                    SyncEdit::UpdateContact { number, text, .. } => self
                        .phonebook_write(Some(*index), number, text)
                        .await
                        .map(|_| ()),
                    _ => self.phonebook_delete(*index).await,
                };
                match r {
                    Ok(()) => result(EditOutcome::Applied, Some(*index), None),
                    Err(e) => fail(Some(*index), e),
                }
            }
            SyncEdit::DeleteMessage { storage, index } => {
                let expected = snapshot
                    .messages
                    .get(&storage.to_ascii_uppercase())
                    .and_then(|l| l.iter().find(|m| m.index == Some(*index)));
                let current = match self.fetch_message(storage, *index).await {
                    Ok(m) => Some(m),
                    Err(ServiceError::InvalidIndex) => None,
                    Err(e) => return fail(Some(*index), e),
                };
                let same = match (&current, expected) {
                    (Some(c), Some(e)) => c.pdu == e.pdu,
                    (None, None) => true,
                    _ => false,
                };
                if !same {
                    return result(
                        EditOutcome::Conflict,
                        Some(*index),
                        Some("message changed since snapshot".into()),
                    );
                }
                if current.is_none() {
                    return result(
                        EditOutcome::Applied,
                        Some(*index),
                        Some("already absent".into()),
                    );
                }
                match self.delete_message(storage, *index).await {
                    Ok(()) => result(EditOutcome::Applied, Some(*index), None),
                    Err(e) => fail(Some(*index), e),
                }
            }
        }
    }
}
