//! Per-owner shared folders confined under one root directory.

use std::path::{Component, Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShareError {
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid owner: {0}")]
    InvalidOwner(String),
    #[error("not found")]
    NotFound,
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareEntry {
    pub owner: String,
    pub path: String,
    pub bytes: u64,
    pub content_type: String,
    pub updated_at: DateTime<Utc>,
}

pub fn valid_owner(owner: &str) -> bool {
    !owner.is_empty()
        && owner.len() <= 64
        && owner
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Validates a relative share path. Rejects empty segments, `.` and `..`,
/// absolute forms, backslashes and control characters.
pub fn validate_path(path: &str) -> Result<PathBuf, ShareError> {
    let bad = || ShareError::InvalidPath(path.to_owned());
    if path.is_empty() || path.len() > 1024 || path.starts_with('/') || path.contains('\\') {
        return Err(bad());
    }
    if path.chars().any(|c| c.is_control()) {
        return Err(bad());
    }
    // Windows drive forms like "C:" are refused on every platform.
    if path.as_bytes().get(1) == Some(&b':') {
        return Err(bad());
    }
    let mut out = PathBuf::new();
    for seg in path.split('/') {
        if seg.is_empty() || seg == "." || seg == ".." {
            return Err(bad());
        }
        out.push(seg);
    }
    if !out.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(bad());
    }
    Ok(out)
}

pub fn content_type_for(path: &str) -> &'static str {
    let ext = path.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("json") => "application/json",
        Some("txt") => "text/plain",
        Some("html" | "htm") => "text/html",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("amr") => "audio/amr",
        Some("wav") => "audio/wav",
        Some("vcf") => "text/vcard",
        _ => "application/octet-stream",
    }
}

#[derive(Debug, Clone)]
pub struct ShareStore {
    root: PathBuf,
}

impl ShareStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ShareStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn owner_dir(&self, owner: &str) -> Result<PathBuf, ShareError> {
        if !valid_owner(owner) {
            return Err(ShareError::InvalidOwner(owner.to_owned()));
        }
        Ok(self.root.join(owner))
    }

    fn resolve(&self, owner: &str, path: &str) -> Result<PathBuf, ShareError> {
        Ok(self.owner_dir(owner)?.join(validate_path(path)?))
    }

    pub async fn read(
        &self,
        owner: &str,
        path: &str,
    ) -> Result<(Vec<u8>, &'static str), ShareError> {
        let full = self.resolve(owner, path)?;
        match tokio::fs::read(&full).await {
            Ok(b) => Ok((b, content_type_for(path))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ShareError::NotFound),
            Err(e) if full.is_dir() => Err(ShareError::InvalidPath(format!(
                "{path} is a directory ({e})"
            ))),
            Err(e) => Err(ShareError::Io(e.to_string())),
        }
    }

    pub async fn write(
        &self,
        owner: &str,
        path: &str,
        data: &[u8],
    ) -> Result<ShareEntry, ShareError> {
        let full = self.resolve(owner, path)?;
        if let Some(parent) = full.parent() {
            tokio::fs::create_dir_all(parent)
                .await
                .map_err(|e| ShareError::Io(e.to_string()))?;
        }
        let tmp = full.with_extension("partial~");
        tokio::fs::write(&tmp, data)
            .await
            .map_err(|e| ShareError::Io(e.to_string()))?;
        tokio::fs::rename(&tmp, &full)
            .await
            .map_err(|e| ShareError::Io(e.to_string()))?;
        self.entry(owner, path, &full).await
    }

    async fn entry(&self, owner: &str, path: &str, full: &Path) -> Result<ShareEntry, ShareError> {
        let meta = tokio::fs::metadata(full)
            .await
            .map_err(|e| ShareError::Io(e.to_string()))?;
        Ok(ShareEntry {
            owner: owner.to_owned(),
            path: path.to_owned(),
            bytes: meta.len(),
            content_type: content_type_for(path).to_owned(),
            updated_at: meta
                .modified()
                .map(DateTime::<Utc>::from)
                .unwrap_or_else(|_| Utc::now()),
        })
    }

    /// Every file under the owner's space, sorted by path.
    pub async fn list(&self, owner: &str) -> Result<Vec<ShareEntry>, ShareError> {
        let dir = self.owner_dir(owner)?;
        let mut out = Vec::new();
        let mut stack = vec![(dir.clone(), String::new())];
        while let Some((d, prefix)) = stack.pop() {
            let mut rd = match tokio::fs::read_dir(&d).await {
                Ok(rd) => rd,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(e) => return Err(ShareError::Io(e.to_string())),
            };
            while let Some(ent) = rd
                .next_entry()
                .await
                .map_err(|e| ShareError::Io(e.to_string()))?
            {
                let name = ent.file_name().to_string_lossy().into_owned();
                let rel = if prefix.is_empty() {
                    name.clone()
                } else {
                    format!("{prefix}/{name}")
                };
                let ft = ent
                    .file_type()
                    .await
                    .map_err(|e| ShareError::Io(e.to_string()))?;
                if ft.is_dir() {
                    stack.push((ent.path(), rel));
                } else if ft.is_file() && !name.ends_with(".partial~") {
                    out.push(self.entry(owner, &rel, &ent.path()).await?);
                }
            }
        }
        out.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(out)
    }
}
