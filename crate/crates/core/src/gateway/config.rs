use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::surveillance::SurveillanceConfig;
use crate::at::Transport;
use crate::mms::MmsStatus;

pub const MIN_TOKEN_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmsMode {
    #[default]
    Pdu,
    Text,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub transport: Transport,
    pub auth_token: String,
    pub sim_pin: Option<String>,
    pub mmsc_url: Option<String>,
    pub quirk_profiles_path: Option<PathBuf>,
    pub share_root: PathBuf,
    pub rtp_bind: IpAddr,
    pub surveillance: Option<SurveillanceConfig>,
    pub http_bind: SocketAddr,
    /// Side channel carrying call audio as 16-bit PCM.
    pub modem_audio: Option<Transport>,
    pub sms_mode: SmsMode,
    /// TP-VP in relative format; absent means no validity period.
    pub validity_relative: Option<u8>,
    pub mms_notify_status: MmsStatus,
    /// Additional tokens, each bound to one share owner.
    pub share_owners: BTreeMap<String, String>,
    pub event_retention: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            transport: Transport::Tcp {
                host: "127.0.0.1".into(),
                port: 7000,
            },
            auth_token: String::new(),
            sim_pin: None,
            mmsc_url: None,
            quirk_profiles_path: None,
            share_root: PathBuf::from("share"),
            rtp_bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            surveillance: None,
            http_bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            modem_audio: None,
            sms_mode: SmsMode::Pdu,
            validity_relative: None,
            mms_notify_status: MmsStatus::Deferred,
            share_owners: BTreeMap::new(),
            event_retention: 1024,
        }
    }
}

impl GatewayConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Loads from `path`, else `CELLGATE_CONFIG`, else defaults; then
    /// applies `CELLGATE_TOKEN`.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        let env_path = std::env::var_os("CELLGATE_CONFIG").map(PathBuf::from);
        let mut cfg = match path.map(Path::to_owned).or(env_path) {
            Some(p) => Self::load(&p)?,
            None => GatewayConfig::default(),
        };
        if let Ok(t) = std::env::var("CELLGATE_TOKEN") {
            cfg.auth_token = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.auth_token.len() < MIN_TOKEN_LEN {
            return Err(ConfigError::Invalid(format!(
                "auth_token must be at least {MIN_TOKEN_LEN} characters"
            )));
        }
        for (token, owner) in &self.share_owners {
            if token.len() < MIN_TOKEN_LEN {
                return Err(ConfigError::Invalid(format!(
                    "token for share owner {owner} is too short"
                )));
            }
            if !super::share::valid_owner(owner) {
                return Err(ConfigError::Invalid(format!(
                    "bad share owner name {owner:?}"
                )));
            }
        }
        if self.event_retention == 0 {
            return Err(ConfigError::Invalid(
                "event_retention must be positive".into(),
            ));
        }
        if let Some(s) = &self.surveillance {
            s.validate().map_err(ConfigError::Invalid)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_json() {
        let cfg: GatewayConfig = serde_json::from_str(
            r#"{"transport":"mem:m1","auth_token":"0123456789abcdef","share_root":"/tmp/s"}"#,
        )
        .unwrap();
        assert_eq!(cfg.transport, Transport::Memory { id: "m1".into() });
        assert_eq!(cfg.event_retention, 1024);
        assert_eq!(cfg.sms_mode, SmsMode::Pdu);
        cfg.validate().unwrap();
    }

    #[test]
    fn short_token_rejected() {
        let cfg = GatewayConfig {
            auth_token: "short".into(),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
