//! The ordered, timestamped session log and its JSON document form.

mod document;

pub use document::{parse_document, DocumentError, Metadata, SessionDocument, SessionStatus, SCHEMA_VERSION};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::scene::{EntityId, Hand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    UserSpeech,
    AIReactiveSpeech,
    AIProactiveSpeech,
    CharacterMovement,
    CharacterGrab,
    CharacterObjectGrab,
    CharacterRelease,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::UserSpeech,
        EventKind::AIReactiveSpeech,
        EventKind::AIProactiveSpeech,
        EventKind::CharacterMovement,
        EventKind::CharacterGrab,
        EventKind::CharacterObjectGrab,
        EventKind::CharacterRelease,
    ];

    pub fn is_speech(self) -> bool {
        matches!(
            self,
            EventKind::UserSpeech | EventKind::AIReactiveSpeech | EventKind::AIProactiveSpeech
        )
    }

    pub fn is_ai(self) -> bool {
        matches!(self, EventKind::AIReactiveSpeech | EventKind::AIProactiveSpeech)
    }

    /// Everything the author does directly; these reset the inactivity timer.
    pub fn is_user_input(self) -> bool {
        !self.is_ai()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::UserSpeech => "UserSpeech",
            EventKind::AIReactiveSpeech => "AIReactiveSpeech",
            EventKind::AIProactiveSpeech => "AIProactiveSpeech",
            EventKind::CharacterMovement => "CharacterMovement",
            EventKind::CharacterGrab => "CharacterGrab",
            EventKind::CharacterObjectGrab => "CharacterObjectGrab",
            EventKind::CharacterRelease => "CharacterRelease",
        }
    }
}

/// Kind-specific payload. Serializes as a bare object (`{}` when empty).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EventPayload {
    Speech { text: String, addressee: Option<EntityId> },
    Movement { from: Vec3, to: Vec3 },
    ObjectGrab { prop: EntityId, hand: Hand },
    Empty {},
}

impl EventPayload {
    pub const EMPTY: EventPayload = EventPayload::Empty {};

    pub fn text(&self) -> Option<&str> {
        match self {
            EventPayload::Speech { text, .. } => Some(text),
            _ => None,
        }
    }

    pub fn addressee(&self) -> Option<&EntityId> {
        match self {
            EventPayload::Speech { addressee, .. } => addressee.as_ref(),
            _ => None,
        }
    }

    fn matches_kind(&self, kind: EventKind) -> bool {
        match self {
            EventPayload::Speech { .. } => kind.is_speech(),
            EventPayload::Movement { .. } => kind == EventKind::CharacterMovement,
            EventPayload::ObjectGrab { .. } => kind == EventKind::CharacterObjectGrab,
            EventPayload::Empty {} => {
                matches!(kind, EventKind::CharacterGrab | EventKind::CharacterRelease)
            }
        }
    }
}

/// An event before the log assigns it an id.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDraft {
    pub t: u64,
    pub kind: EventKind,
    pub actor: EntityId,
    pub payload: EventPayload,
}

impl EventDraft {
    pub fn new(t: u64, kind: EventKind, actor: EntityId, payload: EventPayload) -> Self {
        Self {
            t,
            kind,
            actor,
            payload,
        }
    }

    pub fn speech(t: u64, kind: EventKind, actor: EntityId, text: &str, addressee: Option<EntityId>) -> Self {
        Self::new(
            t,
            kind,
            actor,
            EventPayload::Speech {
                text: text.to_owned(),
                addressee,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionEvent {
    pub event_id: u64,
    pub t: u64,
    pub kind: EventKind,
    pub actor: EntityId,
    pub payload: EventPayload,
}

impl InteractionEvent {
    pub fn draft(&self) -> EventDraft {
        EventDraft::new(self.t, self.kind, self.actor.clone(), self.payload.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogError {
    #[error("timestamp {t} precedes the last logged event at {last}")]
    NonMonotonicTimestamp { t: u64, last: u64 },
    #[error("speech text is empty")]
    EmptySpeech,
    #[error("payload does not match event kind {0:?}")]
    PayloadMismatch(EventKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueLine {
    pub event_id: u64,
    pub t: u64,
    pub speaker: EntityId,
    pub addressee: Option<EntityId>,
    pub text: String,
    pub kind: EventKind,
}

impl DialogueLine {
    pub fn is_ai(&self) -> bool {
        self.kind.is_ai()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub session_id: String,
    pub scene_id: String,
    pub created_at: String,
    events: Vec<InteractionEvent>,
    counts: BTreeMap<EventKind, u64>,
}

impl SessionLog {
    pub fn new(session_id: impl Into<String>, scene_id: impl Into<String>, created_at: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            scene_id: scene_id.into(),
            created_at: created_at.into(),
            events: Vec::new(),
            counts: zero_counts(),
        }
    }

    pub fn events(&self) -> &[InteractionEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_t(&self) -> Option<u64> {
        self.events.last().map(|e| e.t)
    }

    pub fn counts(&self) -> &BTreeMap<EventKind, u64> {
        &self.counts
    }

    /// Appends with the next sequential id (ids start at 0).
    pub fn append_event(&mut self, draft: EventDraft) -> Result<&InteractionEvent, LogError> {
        self.append_with_id(self.events.len() as u64, draft)
    }

    pub(crate) fn append_with_id(&mut self, event_id: u64, draft: EventDraft) -> Result<&InteractionEvent, LogError> {
        if let Some(last) = self.last_t() {
            if draft.t < last {
                return Err(LogError::NonMonotonicTimestamp { t: draft.t, last });
            }
        }
        if !draft.payload.matches_kind(draft.kind) {
            return Err(LogError::PayloadMismatch(draft.kind));
        }
        if let Some(text) = draft.payload.text() {
            if text.trim().is_empty() {
                return Err(LogError::EmptySpeech);
            }
        }
        *self.counts.entry(draft.kind).or_default() += 1;
        self.events.push(InteractionEvent {
            event_id,
            t: draft.t,
            kind: draft.kind,
            actor: draft.actor,
            payload: draft.payload,
        });
        Ok(self.events.last().expect("just pushed"))
    }

    /// All speech lines with `t <= up_to_t`, overridden lines included.
    pub fn dialogue_history(&self, up_to_t: u64) -> Vec<DialogueLine> {
        speech_lines(self.events.iter().take_while(|e| e.t <= up_to_t))
    }

    /// Ids of AI lines overridden by a later user line from the same character.
    pub fn overridden_ids(&self) -> BTreeSet<u64> {
        overridden_ids(&self.events)
    }

    /// Speech lines that survive overrides, in log order.
    pub fn canonical_dialogue(&self) -> Vec<DialogueLine> {
        let gone = self.overridden_ids();
        speech_lines(self.events.iter().filter(|e| !gone.contains(&e.event_id)))
    }
}

pub(crate) fn zero_counts() -> BTreeMap<EventKind, u64> {
    EventKind::ALL.iter().map(|k| (*k, 0)).collect()
}

pub fn recount(events: &[InteractionEvent]) -> BTreeMap<EventKind, u64> {
    let mut counts = zero_counts();
    for e in events {
        *counts.entry(e.kind).or_default() += 1;
    }
    counts
}

pub fn speech_lines<'a>(events: impl IntoIterator<Item = &'a InteractionEvent>) -> Vec<DialogueLine> {
    events
        .into_iter()
        .filter_map(|e| match &e.payload {
            EventPayload::Speech { text, addressee } if e.kind.is_speech() => Some(DialogueLine {
                event_id: e.event_id,
                t: e.t,
                speaker: e.actor.clone(),
                addressee: addressee.clone(),
                text: text.clone(),
                kind: e.kind,
            }),
            _ => None,
        })
        .collect()
}

/// An AI line is overridden when the next user line from the same character
/// follows it directly, ignoring grab/release events in between.
pub fn overridden_ids(events: &[InteractionEvent]) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    for (i, e) in events.iter().enumerate() {
        if e.kind != EventKind::UserSpeech {
            continue;
        }
        let prev = events[..i]
            .iter()
            .rev()
            .find(|p| !matches!(p.kind, EventKind::CharacterGrab | EventKind::CharacterRelease));
        if let Some(p) = prev {
            if p.kind.is_ai() && p.actor == e.actor {
                out.insert(p.event_id);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn speech(t: u64, who: &str) -> EventDraft {
        EventDraft::speech(t, EventKind::UserSpeech, who.into(), "hello there", None)
    }

    fn movement(t: u64, who: &str) -> EventDraft {
        EventDraft::new(
            t,
            EventKind::CharacterMovement,
            who.into(),
            EventPayload::Movement {
                from: Vec3::ZERO,
                to: Vec3::new(1.0, 0.0, 0.0),
            },
        )
    }

    #[test]
    fn ties_are_accepted_regressions_are_not() {
        let mut log = SessionLog::new("s", "robinhood", "0");
        log.append_event(speech(100, "robin")).unwrap();
        log.append_event(speech(100, "mary")).unwrap();
        assert_eq!(
            log.append_event(speech(50, "robin")).unwrap_err(),
            LogError::NonMonotonicTimestamp { t: 50, last: 100 }
        );
    }

    #[test]
    fn counts_track_kinds() {
        let mut log = SessionLog::new("s", "x", "0");
        for t in 0..5 {
            log.append_event(speech(t, "a")).unwrap();
        }
        for t in 5..8 {
            log.append_event(movement(t, "a")).unwrap();
        }
        assert_eq!(log.counts()[&EventKind::UserSpeech], 5);
        assert_eq!(log.counts()[&EventKind::CharacterMovement], 3);
        assert_eq!(log.counts(), &recount(log.events()));
    }

    #[test]
    fn empty_speech_rejected() {
        let mut log = SessionLog::new("s", "x", "0");
        let d = EventDraft::speech(0, EventKind::UserSpeech, "a".into(), "   ", None);
        assert_eq!(log.append_event(d).unwrap_err(), LogError::EmptySpeech);
    }

    #[test]
    fn history_before_first_speech_is_empty() {
        let mut log = SessionLog::new("s", "x", "0");
        assert!(log.dialogue_history(u64::MAX).is_empty());
        log.append_event(movement(10, "a")).unwrap();
        log.append_event(speech(20, "a")).unwrap();
        assert!(log.dialogue_history(19).is_empty());
        assert_eq!(log.dialogue_history(20).len(), 1);
    }

    #[test]
    fn override_skips_grab() {
        let mut log = SessionLog::new("s", "x", "0");
        log.append_event(EventDraft::speech(
            0,
            EventKind::AIReactiveSpeech,
            "p".into(),
            "ai line",
            None,
        ))
        .unwrap();
        log.append_event(EventDraft::new(
            1,
            EventKind::CharacterGrab,
            "p".into(),
            EventPayload::EMPTY,
        ))
        .unwrap();
        log.append_event(EventDraft::speech(
            2,
            EventKind::UserSpeech,
            "p".into(),
            "mine now",
            None,
        ))
        .unwrap();
        assert_eq!(log.overridden_ids(), BTreeSet::from([0]));
        assert_eq!(log.canonical_dialogue().len(), 1);
    }

    proptest! {
        #[test]
        fn history_is_the_speech_filter(kinds in prop::collection::vec(0usize..7, 0..40), cut in 0u64..50) {
            let mut log = SessionLog::new("s", "x", "0");
            for (i, k) in kinds.iter().enumerate() {
                let kind = EventKind::ALL[*k];
                let payload = match kind {
                    k if k.is_speech() => EventPayload::Speech { text: format!("line {i}"), addressee: None },
                    EventKind::CharacterMovement => EventPayload::Movement { from: Vec3::ZERO, to: Vec3::ZERO },
                    EventKind::CharacterObjectGrab => EventPayload::ObjectGrab { prop: "gold".into(), hand: Hand::Right },
                    _ => EventPayload::EMPTY,
                };
                log.append_event(EventDraft::new(i as u64, kind, "a".into(), payload)).unwrap();
            }
            let got: Vec<u64> = log.dialogue_history(cut).iter().map(|l| l.event_id).collect();
            let want: Vec<u64> = log.events().iter()
                .filter(|e| e.t <= cut && e.kind.is_speech())
                .map(|e| e.event_id).collect();
            prop_assert_eq!(got, want);
        }
    }
}
