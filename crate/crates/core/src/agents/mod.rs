//! The three observers. Each turns one logged event (plus the scene before
//! and after it) into zero or more [`IntentFeature`]s.

mod environment;
mod narrator;
mod social;

pub use environment::{EnvironmentAgent, MovementTrail};
pub use narrator::{CharacterArc, NarratorAgent, NarratorOutput};
pub use social::{InteractionMemory, SocialAgent};

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::log::EventKind;
use crate::scene::EntityId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    Environment,
    Social,
    Narrator,
}

/// The registered semantic label vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    ZoneEntry,
    ZoneExit,
    MovementTrail,
    PropProximity,
    CharacterProximity,
    ProximityGrouping,
    Approach,
    Withdrawal,
    MutualOrientation,
    PropGrab,
    DirectAddress,
    UserTakeover,
    CharacterSpeech,
}

impl Label {
    pub const ALL: [Label; 13] = [
        Label::ZoneEntry,
        Label::ZoneExit,
        Label::MovementTrail,
        Label::PropProximity,
        Label::CharacterProximity,
        Label::ProximityGrouping,
        Label::Approach,
        Label::Withdrawal,
        Label::MutualOrientation,
        Label::PropGrab,
        Label::DirectAddress,
        Label::UserTakeover,
        Label::CharacterSpeech,
    ];

    pub fn agent(self) -> AgentKind {
        use Label::*;
        match self {
            ZoneEntry | ZoneExit | MovementTrail | PropProximity | CharacterProximity | ProximityGrouping => {
                AgentKind::Environment
            }
            Approach | Withdrawal | MutualOrientation | PropGrab | DirectAddress | UserTakeover => AgentKind::Social,
            CharacterSpeech => AgentKind::Narrator,
        }
    }

    pub fn as_str(self) -> &'static str {
        use Label::*;
        match self {
            ZoneEntry => "zone_entry",
            ZoneExit => "zone_exit",
            MovementTrail => "movement_trail",
            PropProximity => "prop_proximity",
            CharacterProximity => "character_proximity",
            ProximityGrouping => "proximity_grouping",
            Approach => "approach",
            Withdrawal => "withdrawal",
            MutualOrientation => "mutual_orientation",
            PropGrab => "prop_grab",
            DirectAddress => "direct_address",
            UserTakeover => "user_takeover",
            CharacterSpeech => "character_speech",
        }
    }

    /// Noun used to qualify a fused description ("... with resolve").
    pub fn social_noun(self) -> Option<&'static str> {
        use Label::*;
        Some(match self {
            Approach => "intent",
            Withdrawal => "reluctance",
            MutualOrientation => "recognition",
            PropGrab => "resolve",
            DirectAddress => "urgency",
            UserTakeover => "a new voice",
            _ => return None,
        })
    }
}

/// Exactly one salience component, chosen by the emitting agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Salience {
    E(f64),
    S(f64),
    N(f64),
}

impl Salience {
    pub fn value(self) -> f64 {
        match self {
            Salience::E(v) | Salience::S(v) | Salience::N(v) => v,
        }
    }

    pub fn agent(self) -> AgentKind {
        match self {
            Salience::E(_) => AgentKind::Environment,
            Salience::S(_) => AgentKind::Social,
            Salience::N(_) => AgentKind::Narrator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentFeature {
    pub feature_id: u64,
    pub agent: AgentKind,
    pub actor: EntityId,
    pub target: Option<EntityId>,
    pub location: Vec3,
    pub t: u64,
    pub semantic_label: Label,
    pub confidence: f64,
    pub salience: Salience,
    /// Verb phrase describing the observation ("moves toward Mary").
    pub clause: String,
    /// Mood noun when the agent detected one ("anger").
    pub tone: Option<String>,
    /// First interaction of this pair (social features only).
    pub first_time: bool,
    pub source_event: u64,
}

impl IntentFeature {
    /// Label, agent and salience agree; values lie in [0,1].
    pub fn is_well_formed(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        self.semantic_label.agent() == self.agent
            && self.salience.agent() == self.agent
            && unit(self.confidence)
            && unit(self.salience.value())
    }
}

/// Confidence assigned to features inferred from geometry rather than input.
pub const INFERRED_SPATIAL_CONFIDENCE: f64 = 0.6;

/// Direct author input outranks AI speech.
pub fn confidence_of(kind: EventKind) -> f64 {
    if kind.is_ai() {
        0.8
    } else {
        1.0
    }
}

/// "city_gate" -> "City Gate".
pub(crate) fn humanize(id: &str) -> String {
    id.split(['_', '-', ' '])
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut cs = w.chars();
            match cs.next() {
                Some(f) => f.to_uppercase().chain(cs).collect::<String>(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn feature(
    label: Label,
    actor: &EntityId,
    target: Option<&EntityId>,
    location: Vec3,
    t: u64,
    confidence: f64,
    salience: Salience,
    clause: String,
    source_event: u64,
) -> IntentFeature {
    IntentFeature {
        feature_id: 0,
        agent: label.agent(),
        actor: actor.clone(),
        target: target.cloned(),
        location,
        t,
        semantic_label: label,
        confidence,
        salience,
        clause,
        tone: None,
        first_time: false,
        source_event,
    }
}
