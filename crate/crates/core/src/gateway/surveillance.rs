//! Motion alert service: a sensor event becomes an SMS to a chosen number.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::sms::Address;

pub const DEFAULT_TEMPLATE: &str = "Motion detected at {time}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveillanceConfig {
    pub alert_number: String,
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_template")]
    pub message_template: String,
}

fn default_template() -> String {
    DEFAULT_TEMPLATE.to_owned()
}

impl SurveillanceConfig {
    pub fn validate(&self) -> Result<(), String> {
        let addr: Address = self
            .alert_number
            .parse()
            .map_err(|e| format!("alert_number: {e}"))?;
        if matches!(addr.ton, crate::sms::TypeOfNumber::Alphanumeric) {
            return Err("alert_number must be a phone number".into());
        }
        if self.message_template.is_empty() {
            return Err("message_template is empty".into());
        }
        Ok(())
    }

    /// Substitutes `{time}` with the event time, UTC, to the second.
    pub fn render(&self, at: DateTime<Utc>) -> String {
        render_template(&self.message_template, at)
    }
}

pub fn render_template(template: &str, at: DateTime<Utc>) -> String {
    template.replace("{time}", &at.format("%Y-%m-%d %H:%M:%S UTC").to_string())
}
