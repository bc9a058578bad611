//! Telemetry events sent from the engine to the monitor.
//!
//! Wire format: one JSON object per HTTP POST to `/api/v1/events`.
//!
//! ```json
//! {"event_id": "0190...", "type": "command", "user": "giles", "host": "nikola",
//!  "ip": "10.0.0.7", "lab_id": "lab1", "level_id": "lvl2",
//!  "command_text": "ls -la", "timestamp": "2024-03-01T10:00:00Z", "extra": {}}
//! ```
//!
//! `event_id` and `timestamp` may be omitted by senders; the monitor fills them
//! in. Keys it does not know are kept as strings in `extra`.

use std::collections::BTreeMap;
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventType {
    Start,
    Command,
    Passed,
    Exit,
    Help,
    Ack,
}

impl EventType {
    pub const ALL: [EventType; 6] = [
        EventType::Start,
        EventType::Command,
        EventType::Passed,
        EventType::Exit,
        EventType::Help,
        EventType::Ack,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Start => "start",
            EventType::Command => "command",
            EventType::Passed => "passed",
            EventType::Exit => "exit",
            EventType::Help => "help",
            EventType::Ack => "ack",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown event type `{s}`"))
    }
}

/// `extra` key set on `passed` events that moved the learner to another level.
pub const EXTRA_NEXT_LEVEL: &str = "next_level";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub event_id: Uuid,
    #[serde(rename = "type")]
    pub event_type: EventType,
    pub user: String,
    pub host: String,
    pub ip: String,
    pub lab_id: String,
    pub level_id: String,
    #[serde(default)]
    pub command_text: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl Event {
    /// Ordering key used everywhere events are sorted: timestamp, then id.
    pub fn order_key(&self) -> (DateTime<Utc>, Uuid) {
        (self.timestamp, self.event_id)
    }
}

/// An event as received over HTTP, before validation.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct WireEvent {
    #[serde(default)]
    pub event_id: Option<String>,
    #[serde(rename = "type", default)]
    pub event_type: Option<String>,
    #[serde(default)]
    pub user: Option<String>,
    #[serde(default)]
    pub host: Option<String>,
    #[serde(default)]
    pub ip: Option<String>,
    #[serde(default)]
    pub lab_id: Option<String>,
    #[serde(default)]
    pub level_id: Option<String>,
    #[serde(default, alias = "command")]
    pub command_text: Option<String>,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
    #[serde(flatten)]
    pub unknown: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EventRejection {
    #[error("missing event type")]
    MissingType,
    #[error("{0}")]
    UnknownType(String),
    #[error("missing `{0}`")]
    MissingField(&'static str),
    #[error("`ip` is not an IPv4 or IPv6 address: {0}")]
    BadIp(String),
    #[error("`event_id` is not a UUID: {0}")]
    BadId(String),
}

impl WireEvent {
    /// Validates and completes the event. `now` is used when no timestamp was sent.
    pub fn into_event(self, now: DateTime<Utc>) -> Result<Event, EventRejection> {
        let event_type: EventType = self
            .event_type
            .as_deref()
            .ok_or(EventRejection::MissingType)?
            .parse()
            .map_err(EventRejection::UnknownType)?;
        let user = self.user.filter(|u| !u.is_empty()).ok_or(EventRejection::MissingField("user"))?;
        let lab_id = self
            .lab_id
            .filter(|l| !l.is_empty())
            .ok_or(EventRejection::MissingField("lab_id"))?;
        let ip = self.ip.unwrap_or_default();
        if !ip.is_empty() && ip.parse::<IpAddr>().is_err() {
            return Err(EventRejection::BadIp(ip));
        }
        let event_id = match self.event_id {
            Some(id) => Uuid::parse_str(&id).map_err(|_| EventRejection::BadId(id))?,
            None => Uuid::now_v7(),
        };
        let mut extra = self.extra;
        for (k, v) in self.unknown {
            let text = match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            extra.entry(k).or_insert(text);
        }
        Ok(Event {
            event_id,
            event_type,
            user,
            host: self.host.unwrap_or_default(),
            ip,
            lab_id,
            level_id: self.level_id.unwrap_or_default(),
            command_text: self.command_text.unwrap_or_default(),
            timestamp: self.timestamp.unwrap_or(now),
            extra,
        })
    }
}
