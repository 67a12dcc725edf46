use serde::{Deserialize, Serialize};

use super::topic::Topic;
use crate::canonical;
use crate::clock::Millis;
use crate::data::Upload;
use crate::motivation::{MapPin, RewardEvent, ScoreSnapshot, TaskRequest, TimelineEntry};

/// One pub/sub message. The wire form is the canonical JSON of this struct:
/// the body contributes a `kind` tag and a `payload` object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub message_id: String,
    pub topic: Topic,
    pub publisher: String,
    pub seq: u64,
    pub sent_at: Millis,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Body {
    Report(Upload),
    TaskRequest(TaskRequest),
    RewardEvent(RewardEvent),
    TimelineEntry(TimelineEntry),
    MapPin(MapPin),
    ScoreSnapshot(ScoreSnapshot),
    Status(StatusNotice),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Report,
    TaskRequest,
    RewardEvent,
    TimelineEntry,
    MapPin,
    ScoreSnapshot,
    Status,
}

impl Body {
    pub fn kind(&self) -> Kind {
        match self {
            Body::Report(_) => Kind::Report,
            Body::TaskRequest(_) => Kind::TaskRequest,
            Body::RewardEvent(_) => Kind::RewardEvent,
            Body::TimelineEntry(_) => Kind::TimelineEntry,
            Body::MapPin(_) => Kind::MapPin,
            Body::ScoreSnapshot(_) => Kind::ScoreSnapshot,
            Body::Status(_) => Kind::Status,
        }
    }
}

/// Free-form status downlink: join confirmations, rejections, lifecycle notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusNotice {
    pub code: String,
    pub message: String,
    /// The upload this notice answers, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl StatusNotice {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self { code: code.into(), message: message.into(), in_reply_to: None, detail: None }
    }

    pub fn replying_to(mut self, message_id: &str) -> Self {
        self.in_reply_to = Some(message_id.to_string());
        self
    }
}

impl Envelope {
    pub fn kind(&self) -> Kind {
        self.body.kind()
    }

    pub fn to_wire(&self) -> String {
        canonical::to_canonical_string(self).expect("envelope serializes")
    }

    pub fn from_wire(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
