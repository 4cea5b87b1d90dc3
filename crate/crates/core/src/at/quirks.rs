//! Per-model overrides for modems that reject or rename standard commands.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::command::AtCommand;
use super::AtError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CommandOverride {
    /// The literal string `"unsupported"`.
    Unsupported(UnsupportedMarker),
    /// Replacement command name, e.g. `"*CLAC"` for `"+CLAC"`.
    Replace(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnsupportedMarker {
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuirkProfile {
    /// Matched as a case-insensitive substring of the +CGMI/+CGMM replies.
    pub model_match: String,
    #[serde(default)]
    pub command_overrides: BTreeMap<String, CommandOverride>,
    #[serde(default)]
    pub extra_init: Vec<AtCommand>,
}

/// What the engine should do with a command after applying a profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rewritten {
    Send(AtCommand),
    Unsupported,
}

impl QuirkProfile {
    pub fn matches(&self, identity: &str) -> bool {
        !self.model_match.is_empty()
            && identity
                .to_ascii_lowercase()
                .contains(&self.model_match.to_ascii_lowercase())
    }

    /// Renames only; arguments, prompt handling and framing are untouched.
    pub fn rewrite(&self, cmd: &AtCommand) -> Rewritten {
        match self.command_overrides.get(&cmd.name) {
            None => Rewritten::Send(cmd.clone()),
            Some(CommandOverride::Unsupported(_)) => Rewritten::Unsupported,
            Some(CommandOverride::Replace(name)) => {
                let mut cmd = cmd.clone();
                cmd.name = name.clone();
                Rewritten::Send(cmd)
            }
        }
    }

    pub fn is_unsupported(&self, name: &str) -> bool {
        matches!(
            self.command_overrides.get(name),
            Some(CommandOverride::Unsupported(_))
        )
    }
}

pub fn load_profiles(path: &Path) -> Result<Vec<QuirkProfile>, AtError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AtError::InvalidArgument(format!("{}: {e}", path.display())))?;
    parse_profiles(&text)
}

pub fn parse_profiles(json: &str) -> Result<Vec<QuirkProfile>, AtError> {
    serde_json::from_str(json).map_err(|e| AtError::InvalidArgument(format!("quirk profiles: {e}")))
}

/// First profile whose `model_match` occurs in `identity`.
pub fn select<'a>(profiles: &'a [QuirkProfile], identity: &str) -> Option<&'a QuirkProfile> {
    profiles.iter().find(|p| p.matches(identity))
}

#[cfg(test)]
mod tests {
    use super::*;

    const JSON: &str = r#"[
        {"model_match": "acme", "command_overrides": {"+CLAC": "unsupported", "+CHUP": "H"},
         "extra_init": ["AT*SSTK=1", "+CSCS=\"GSM\""]},
        {"model_match": "SIMCOM"}
    ]"#;

    #[test]
    fn parse_and_select() {
        let profiles = parse_profiles(JSON).unwrap();
        assert_eq!(profiles.len(), 2);
        let p = select(&profiles, "ACME Corp\nModel X").unwrap();
        assert!(p.is_unsupported("+CLAC"));
        assert_eq!(p.extra_init[0].body(), "AT*SSTK=1");
        assert_eq!(p.extra_init[1].body(), "AT+CSCS=\"GSM\"");
        assert_eq!(
            p.rewrite(&AtCommand::execute("+CLAC")),
            Rewritten::Unsupported
        );
        match p.rewrite(&AtCommand::execute("+CHUP")) {
            Rewritten::Send(c) => assert_eq!(c.body(), "ATH"),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            select(&profiles, "SIMCOM_LTD").unwrap().model_match,
            "SIMCOM"
        );
        assert!(select(&profiles, "other").is_none());
    }

    #[test]
    fn bad_json() {
        assert!(parse_profiles("{").is_err());
        assert!(parse_profiles(r#"[{"model_match":"x","extra_init":["AT+X=\"open"]}]"#).is_err());
    }
}
