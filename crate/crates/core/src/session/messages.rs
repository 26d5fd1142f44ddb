//! Wire messages between a client and a session. JSON objects tagged by `type`.

use serde::{Deserialize, Serialize};

use crate::assembly::{Replay, StoryMarble};
use crate::export::{ContinuityWarning, ExportFormat, Screenplay};
use crate::geometry::Vec3;
use crate::log::{EventKind, SessionStatus};
use crate::scene::{Attachment, CharacterState, EntityId, Hand, SceneState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    /// Strictly increasing per connection.
    pub seq: u64,
    /// Logical time in ms; the server clock is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,
    #[serde(flatten)]
    pub body: ClientBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ClientBody {
    Grab {
        character: EntityId,
    },
    Release {
        character: EntityId,
    },
    Move {
        character: EntityId,
        to: Vec3,
    },
    Attach {
        prop: EntityId,
        character: EntityId,
        hand: Hand,
    },
    Speak {
        character: EntityId,
        text: String,
    },
    /// Advances the clock without input (deadlines, proactive speech).
    Tick,
    EndPlay,
    Reorder {
        marble_id: String,
        position: usize,
    },
    Delete {
        marble_id: String,
    },
    Undo,
    Export {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        format: Option<ExportFormat>,
    },
    ReplayMarble {
        marble_id: String,
    },
    Close,
}

impl ClientBody {
    pub fn name(&self) -> &'static str {
        match self {
            ClientBody::Grab { .. } => "Grab",
            ClientBody::Release { .. } => "Release",
            ClientBody::Move { .. } => "Move",
            ClientBody::Attach { .. } => "Attach",
            ClientBody::Speak { .. } => "Speak",
            ClientBody::Tick => "Tick",
            ClientBody::EndPlay => "EndPlay",
            ClientBody::Reorder { .. } => "Reorder",
            ClientBody::Delete { .. } => "Delete",
            ClientBody::Undo => "Undo",
            ClientBody::Export { .. } => "Export",
            ClientBody::ReplayMarble { .. } => "ReplayMarble",
            ClientBody::Close => "Close",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterView {
    pub id: EntityId,
    pub position: Vec3,
    pub facing: Vec3,
    pub held_prop: Option<EntityId>,
    pub state: CharacterState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropView {
    pub id: EntityId,
    pub position: Vec3,
    pub attached_to: Option<Attachment>,
}

pub fn character_views(scene: &SceneState) -> Vec<CharacterView> {
    scene
        .characters
        .iter()
        .map(|c| CharacterView {
            id: c.id.clone(),
            position: c.position,
            facing: c.facing,
            held_prop: c.held_prop.clone(),
            state: c.state,
        })
        .collect()
}

pub fn prop_views(scene: &SceneState) -> Vec<PropView> {
    scene
        .props
        .iter()
        .map(|p| PropView {
            id: p.id.clone(),
            position: p.position,
            attached_to: p.attached_to.clone(),
        })
        .collect()
}

/// Entities whose view changed between two scene states.
pub fn scene_delta(before: &SceneState, after: &SceneState, t: u64) -> Option<ServerMessage> {
    let (cb, ca) = (character_views(before), character_views(after));
    let (pb, pa) = (prop_views(before), prop_views(after));
    let characters: Vec<CharacterView> = ca.into_iter().filter(|c| !cb.contains(c)).collect();
    let props: Vec<PropView> = pa.into_iter().filter(|p| !pb.contains(p)).collect();
    if characters.is_empty() && props.is_empty() {
        None
    } else {
        Some(ServerMessage::SceneDelta { t, characters, props })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ServerMessage {
    SceneDelta {
        t: u64,
        characters: Vec<CharacterView>,
        props: Vec<PropView>,
    },
    SpeechEvent {
        event_id: u64,
        t: u64,
        kind: EventKind,
        speaker: EntityId,
        addressee: Option<EntityId>,
        text: String,
        /// The AI line this one overrides.
        overrides: Option<u64>,
    },
    MarbleSpawned {
        marble: StoryMarble,
    },
    TimelineState {
        status: SessionStatus,
        order: Vec<String>,
        marbles: Vec<StoryMarble>,
    },
    ExportResult {
        synopsis: String,
        screenplay_text: String,
        screenplay: Screenplay,
        continuity: Vec<String>,
        warnings: Vec<ContinuityWarning>,
    },
    MarbleReplay {
        replay: Replay,
    },
    Error {
        seq: Option<u64>,
        code: String,
        message: String,
    },
    Ack {
        seq: u64,
    },
}

impl ServerMessage {
    pub fn name(&self) -> &'static str {
        match self {
            ServerMessage::SceneDelta { .. } => "SceneDelta",
            ServerMessage::SpeechEvent { .. } => "SpeechEvent",
            ServerMessage::MarbleSpawned { .. } => "MarbleSpawned",
            ServerMessage::TimelineState { .. } => "TimelineState",
            ServerMessage::ExportResult { .. } => "ExportResult",
            ServerMessage::MarbleReplay { .. } => "MarbleReplay",
            ServerMessage::Error { .. } => "Error",
            ServerMessage::Ack { .. } => "Ack",
        }
    }
}
