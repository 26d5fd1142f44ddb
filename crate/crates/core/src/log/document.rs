//! The versioned session document: the log plus everything derived from it.
//!
//! Parsing is strict. Unknown fields are rejected and every structural or
//! consistency error is reported with the JSON pointer of the offending value.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{recount, EventKind, EventPayload, InteractionEvent, SessionLog};
use crate::assembly::StoryMarble;
use crate::fusion::IntentFrame;
use crate::geometry::Vec3;
use crate::scene::{EntityId, Hand};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Active,
    Assembling,
    Exported,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub duration_ms: u64,
    pub export_time_ms: Option<u64>,
    pub interaction_counts: BTreeMap<EventKind, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionDocument {
    pub schema_version: u32,
    pub session_id: String,
    pub scene_id: String,
    pub created_at: String,
    pub events: Vec<InteractionEvent>,
    pub metadata: Metadata,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intent_frames: Option<Vec<IntentFrame>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marbles: Option<Vec<StoryMarble>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeline: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<SessionStatus>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DocumentError {
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
}

impl DocumentError {
    pub fn path(&self) -> &str {
        match self {
            DocumentError::SchemaViolation { path, .. } => path,
        }
    }

    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        DocumentError::SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    schema_version: u32,
    session_id: String,
    scene_id: String,
    created_at: String,
    events: Vec<RawEvent>,
    metadata: Metadata,
    #[serde(default)]
    intent_frames: Option<Vec<IntentFrame>>,
    #[serde(default)]
    marbles: Option<Vec<StoryMarble>>,
    #[serde(default)]
    timeline: Option<Vec<String>>,
    #[serde(default)]
    status: Option<SessionStatus>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    event_id: u64,
    t: u64,
    kind: EventKind,
    actor: EntityId,
    payload: RawPayload,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPayload {
    text: Option<String>,
    #[serde(default)]
    addressee: Option<Option<EntityId>>,
    from: Option<Vec3>,
    to: Option<Vec3>,
    prop: Option<EntityId>,
    hand: Option<Hand>,
}

impl RawPayload {
    fn into_payload(self, kind: EventKind, base: &str) -> Result<EventPayload, DocumentError> {
        let present: Vec<&str> = [
            ("text", self.text.is_some()),
            ("addressee", self.addressee.is_some()),
            ("from", self.from.is_some()),
            ("to", self.to.is_some()),
            ("prop", self.prop.is_some()),
            ("hand", self.hand.is_some()),
        ]
        .into_iter()
        .filter_map(|(k, p)| p.then_some(k))
        .collect();
        let allowed: &[&str] = match kind {
            k if k.is_speech() => &["text", "addressee"],
            EventKind::CharacterMovement => &["from", "to"],
            EventKind::CharacterObjectGrab => &["prop", "hand"],
            _ => &[],
        };
        if let Some(extra) = present.iter().find(|k| !allowed.contains(k)) {
            return Err(DocumentError::at(
                format!("{base}/{extra}"),
                format!("field not allowed for {}", kind.as_str()),
            ));
        }
        let missing = |field: &str| DocumentError::at(format!("{base}/{field}"), "missing field");
        Ok(match kind {
            k if k.is_speech() => {
                let text = self.text.ok_or_else(|| missing("text"))?;
                if text.trim().is_empty() {
                    return Err(DocumentError::at(format!("{base}/text"), "speech text is empty"));
                }
                EventPayload::Speech {
                    text,
                    addressee: self.addressee.flatten(),
                }
            }
            EventKind::CharacterMovement => EventPayload::Movement {
                from: self.from.ok_or_else(|| missing("from"))?,
                to: self.to.ok_or_else(|| missing("to"))?,
            },
            EventKind::CharacterObjectGrab => EventPayload::ObjectGrab {
                prop: self.prop.ok_or_else(|| missing("prop"))?,
                hand: self.hand.ok_or_else(|| missing("hand"))?,
            },
            _ => EventPayload::EMPTY,
        })
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { .. } | Segment::Unknown => {}
        }
    }
    out
}

/// Field name quoted in a serde "missing field" / "unknown field" message.
fn named_field(message: &str) -> Option<&str> {
    let rest = message
        .strip_prefix("missing field `")
        .or_else(|| message.strip_prefix("unknown field `"))?;
    rest.split('`').next()
}

/// Parses and validates a session document.
pub fn parse_document(json: &str) -> Result<SessionDocument, DocumentError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let raw: RawDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = pointer(e.path());
        let message = e.inner().to_string();
        if let Some(field) = named_field(&message).filter(|f| !path.ends_with(&format!("/{f}"))) {
            path.push('/');
            path.push_str(field);
        }
        if path.is_empty() {
            path.push('/');
        }
        DocumentError::at(path, message)
    })?;
    SessionDocument::from_raw(raw)
}

impl SessionDocument {
    fn from_raw(raw: RawDocument) -> Result<Self, DocumentError> {
        if raw.schema_version != SCHEMA_VERSION {
            return Err(DocumentError::at(
                "/schema_version",
                format!("unsupported schema version {}", raw.schema_version),
            ));
        }
        let mut events = Vec::with_capacity(raw.events.len());
        let mut ids = BTreeSet::new();
        let mut last_t = 0;
        for (i, e) in raw.events.into_iter().enumerate() {
            let base = format!("/events/{i}");
            if !ids.insert(e.event_id) {
                return Err(DocumentError::at(format!("{base}/event_id"), "duplicate event id"));
            }
            if e.t < last_t {
                return Err(DocumentError::at(format!("{base}/t"), "timestamp decreases"));
            }
            last_t = e.t;
            let payload = e.payload.into_payload(e.kind, &format!("{base}/payload"))?;
            events.push(InteractionEvent {
                event_id: e.event_id,
                t: e.t,
                kind: e.kind,
                actor: e.actor,
                payload,
            });
        }
        let mut counts = super::zero_counts();
        counts.extend(raw.metadata.interaction_counts.iter().map(|(k, v)| (*k, *v)));
        if counts != recount(&events) {
            return Err(DocumentError::at(
                "/metadata/interaction_counts",
                "counts do not match the events",
            ));
        }
        if raw.metadata.duration_ms < last_t {
            return Err(DocumentError::at(
                "/metadata/duration_ms",
                "duration ends before the last event",
            ));
        }
        Ok(SessionDocument {
            schema_version: raw.schema_version,
            session_id: raw.session_id,
            scene_id: raw.scene_id,
            created_at: raw.created_at,
            events,
            metadata: Metadata {
                interaction_counts: counts,
                ..raw.metadata
            },
            intent_frames: raw.intent_frames,
            marbles: raw.marbles,
            timeline: raw.timeline,
            status: raw.status,
        })
    }

    /// A bare document holding only the log.
    pub fn from_log(log: &SessionLog, duration_ms: u64, export_time_ms: Option<u64>) -> Self {
        SessionDocument {
            schema_version: SCHEMA_VERSION,
            session_id: log.session_id.clone(),
            scene_id: log.scene_id.clone(),
            created_at: log.created_at.clone(),
            events: log.events().to_vec(),
            metadata: Metadata {
                duration_ms: duration_ms.max(log.last_t().unwrap_or(0)),
                export_time_ms,
                interaction_counts: log.counts().clone(),
            },
            intent_frames: None,
            marbles: None,
            timeline: None,
            status: None,
        }
    }

    pub fn to_log(&self) -> SessionLog {
        let mut log = SessionLog::new(&self.session_id, &self.scene_id, &self.created_at);
        for e in &self.events {
            log.append_with_id(e.event_id, e.draft())
                .expect("document events were validated on parse");
        }
        log
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }
}
