//! The staged world: characters, props, zones and stage bounds, plus the
//! direct-manipulation operations (grab, release, drag, attach) that mutate it.
//!
//! Every mutating operation takes the caller's logical clock `t` and returns
//! the [`EventDraft`] the session should append to its log. The scene never
//! reads a wall clock.

mod fixture;

pub use fixture::{
    bundled_fixture, fixture_ids, BeatTitle, CharacterRole, DeterministicScript, PreambleLine, SceneDocument,
    SceneFixture, StoryRoleConfiguration, TaskMode,
};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Vec3};
use crate::log::{EventDraft, EventKind, EventPayload};

/// Radius around a hand zone inside which a prop snaps to the hand.
pub const ATTACH_RADIUS_M: f64 = 0.15;
/// Half-angle of the cone used to decide whom a character is facing.
pub const FACING_CONE_HALF_ANGLE_DEG: f64 = 45.0;
/// Horizontal displacement below which a move leaves facing unchanged.
pub const FACING_MIN_DISPLACEMENT_M: f64 = 1e-4;
/// Lateral offset of a hand zone from the character's root.
pub const HAND_OFFSET_M: f64 = 0.08;

const FACING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for EntityId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl PartialEq<str> for EntityId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for EntityId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CharacterState {
    Idle,
    Talking,
    Moving,
    HeldByUser,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Hand {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Character {
    pub id: EntityId,
    pub name: String,
    pub position: Vec3,
    pub facing: Vec3,
    pub held_prop: Option<EntityId>,
    pub state: CharacterState,
    pub role_config_ref: String,
    /// Other names this character answers to in dialogue.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

impl Character {
    /// Display name followed by aliases.
    pub fn name_terms(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str()).chain(self.aliases.iter().map(String::as_str))
    }

    /// Hand-zone position before clamping to the stage.
    pub fn hand_position(&self, hand: Hand) -> Vec3 {
        let right = Vec3::right_of(self.facing);
        let side = match hand {
            Hand::Right => 1.0,
            Hand::Left => -1.0,
        };
        self.position + right * (HAND_OFFSET_M * side)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub character: EntityId,
    pub hand: Hand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop {
    pub id: EntityId,
    pub name: String,
    pub position: Vec3,
    pub attached_to: Option<Attachment>,
    /// Extra words that refer to this prop in dialogue ("gun" for a pistol).
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl Prop {
    /// Name followed by aliases, all lowercase.
    pub fn mention_terms(&self) -> Vec<String> {
        std::iter::once(self.name.to_lowercase())
            .chain(self.aliases.iter().map(|a| a.to_lowercase()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: EntityId,
    pub tag: String,
    pub center: Vec3,
    pub half_extents: Vec3,
}

impl Zone {
    pub fn bounds(&self) -> Aabb {
        Aabb::new(self.center, self.half_extents)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub scene_id: String,
    pub characters: Vec<Character>,
    pub props: Vec<Prop>,
    pub zones: Vec<Zone>,
    pub stage_bounds: Aabb,
    pub environment_label: String,
    pub clock: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("unknown character `{0}`")]
    UnknownCharacter(EntityId),
    #[error("unknown prop `{0}`")]
    UnknownProp(EntityId),
    #[error("character `{held}` is already held")]
    AlreadyHeld { held: EntityId },
    #[error("character `{0}` is not held")]
    NotHeld(EntityId),
    #[error("character `{0}` is held and cannot move")]
    HeldCharacterCannotMove(EntityId),
    #[error("move target is not finite")]
    NonFiniteTarget,
    #[error("prop is {0:.3} m from the hand zone")]
    OutOfRange(f64),
    #[error("prop `{0}` is already attached")]
    PropAlreadyAttached(EntityId),
    #[error("character `{0}` already holds a prop")]
    HandOccupied(EntityId),
    #[error("clock moved backwards: {t} < {clock}")]
    ClockRegression { t: u64, clock: u64 },
    #[error("invalid scene: {0}")]
    Invalid(String),
}

impl SceneState {
    pub fn character(&self, id: &EntityId) -> Option<&Character> {
        self.characters.iter().find(|c| &c.id == id)
    }

    fn character_mut(&mut self, id: &EntityId) -> Result<&mut Character, SceneError> {
        self.characters
            .iter_mut()
            .find(|c| &c.id == id)
            .ok_or_else(|| SceneError::UnknownCharacter(id.clone()))
    }

    pub fn prop(&self, id: &EntityId) -> Option<&Prop> {
        self.props.iter().find(|p| &p.id == id)
    }

    pub fn zone(&self, id: &EntityId) -> Option<&Zone> {
        self.zones.iter().find(|z| &z.id == id)
    }

    /// Position of any character or prop.
    pub fn entity_position(&self, id: &EntityId) -> Option<Vec3> {
        self.character(id)
            .map(|c| c.position)
            .or_else(|| self.prop(id).map(|p| p.position))
    }

    /// Display name of a character, prop or zone; falls back to the raw id.
    pub fn display_name(&self, id: &EntityId) -> String {
        if let Some(c) = self.character(id) {
            c.name.clone()
        } else if let Some(p) = self.prop(id) {
            format!("the {}", p.name)
        } else if let Some(z) = self.zone(id) {
            z.tag.clone()
        } else {
            id.to_string()
        }
    }

    /// Hand-zone position, kept on the stage.
    pub fn hand_zone(&self, c: &Character, hand: Hand) -> Vec3 {
        self.stage_bounds.clamp(c.hand_position(hand))
    }

    pub fn held_character(&self) -> Option<&Character> {
        self.characters.iter().find(|c| c.state == CharacterState::HeldByUser)
    }

    fn tick(&mut self, t: u64) -> Result<(), SceneError> {
        if t < self.clock {
            return Err(SceneError::ClockRegression { t, clock: self.clock });
        }
        self.clock = t;
        Ok(())
    }

    pub fn grab_character(&mut self, id: &EntityId, t: u64) -> Result<EventDraft, SceneError> {
        if self.character(id).is_none() {
            return Err(SceneError::UnknownCharacter(id.clone()));
        }
        if let Some(held) = self.held_character() {
            return Err(SceneError::AlreadyHeld { held: held.id.clone() });
        }
        self.tick(t)?;
        // Moving is transient; grabbing cancels it.
        self.character_mut(id)?.state = CharacterState::HeldByUser;
        Ok(EventDraft::new(
            t,
            EventKind::CharacterGrab,
            id.clone(),
            EventPayload::EMPTY,
        ))
    }

    pub fn release_character(&mut self, id: &EntityId, t: u64) -> Result<EventDraft, SceneError> {
        let c = self
            .character(id)
            .ok_or_else(|| SceneError::UnknownCharacter(id.clone()))?;
        if c.state != CharacterState::HeldByUser {
            return Err(SceneError::NotHeld(id.clone()));
        }
        self.tick(t)?;
        self.character_mut(id)?.state = CharacterState::Idle;
        Ok(EventDraft::new(
            t,
            EventKind::CharacterRelease,
            id.clone(),
            EventPayload::EMPTY,
        ))
    }

    pub fn move_character(&mut self, id: &EntityId, target: Vec3, t: u64) -> Result<EventDraft, SceneError> {
        let c = self
            .character(id)
            .ok_or_else(|| SceneError::UnknownCharacter(id.clone()))?;
        if c.state == CharacterState::HeldByUser {
            return Err(SceneError::HeldCharacterCannotMove(id.clone()));
        }
        if !target.is_finite() {
            return Err(SceneError::NonFiniteTarget);
        }
        self.tick(t)?;
        let to = self.stage_bounds.clamp(target);
        let c = self.character_mut(id)?;
        let from = c.position;
        let displacement = (to - from).horizontal();
        if displacement.length() > FACING_MIN_DISPLACEMENT_M {
            if let Some(dir) = displacement.normalized() {
                c.facing = dir;
            }
        }
        c.position = to;
        c.state = CharacterState::Idle;
        self.sync_attached_props(id);
        Ok(EventDraft::new(
            t,
            EventKind::CharacterMovement,
            id.clone(),
            EventPayload::Movement { from, to },
        ))
    }

    pub fn attach_prop(
        &mut self,
        prop_id: &EntityId,
        character_id: &EntityId,
        hand: Hand,
        t: u64,
    ) -> Result<EventDraft, SceneError> {
        let prop = self
            .prop(prop_id)
            .ok_or_else(|| SceneError::UnknownProp(prop_id.clone()))?;
        let character = self
            .character(character_id)
            .ok_or_else(|| SceneError::UnknownCharacter(character_id.clone()))?;
        if prop.attached_to.is_some() {
            return Err(SceneError::PropAlreadyAttached(prop_id.clone()));
        }
        if character.held_prop.is_some() {
            return Err(SceneError::HandOccupied(character_id.clone()));
        }
        let hand_pos = self.stage_bounds.clamp(character.hand_position(hand));
        let distance = prop.position.distance(hand_pos);
        if distance > ATTACH_RADIUS_M {
            return Err(SceneError::OutOfRange(distance));
        }
        self.tick(t)?;
        self.character_mut(character_id)?.held_prop = Some(prop_id.clone());
        let prop = self
            .props
            .iter_mut()
            .find(|p| &p.id == prop_id)
            .expect("prop checked above");
        prop.attached_to = Some(Attachment {
            character: character_id.clone(),
            hand,
        });
        prop.position = hand_pos;
        Ok(EventDraft::new(
            t,
            EventKind::CharacterObjectGrab,
            character_id.clone(),
            EventPayload::ObjectGrab {
                prop: prop_id.clone(),
                hand,
            },
        ))
    }

    /// Turns a character toward another entity on the stage plane.
    pub fn face_toward(&mut self, id: &EntityId, target: &EntityId, t: u64) -> Result<(), SceneError> {
        let target_pos = self
            .entity_position(target)
            .ok_or_else(|| SceneError::UnknownCharacter(target.clone()))?;
        self.tick(t)?;
        let c = self.character_mut(id)?;
        if let Some(dir) = (target_pos - c.position).horizontal().normalized() {
            c.facing = dir;
        }
        self.sync_attached_props(id);
        Ok(())
    }

    /// Marks a character as talking (AI line in flight) or back to idle.
    pub fn set_talking(&mut self, id: &EntityId, talking: bool) -> Result<(), SceneError> {
        let c = self.character_mut(id)?;
        match (talking, c.state) {
            (true, CharacterState::Idle) => c.state = CharacterState::Talking,
            (false, CharacterState::Talking) => c.state = CharacterState::Idle,
            _ => {}
        }
        Ok(())
    }

    fn sync_attached_props(&mut self, character_id: &EntityId) {
        let Some(c) = self.character(character_id).cloned() else {
            return;
        };
        let bounds = self.stage_bounds;
        for p in &mut self.props {
            if let Some(att) = &p.attached_to {
                if &att.character == character_id {
                    p.position = bounds.clamp(c.hand_position(att.hand));
                }
            }
        }
    }

    /// The nearest character inside the speaker's facing cone.
    pub fn faced_character(&self, speaker: &EntityId) -> Result<Option<EntityId>, SceneError> {
        let s = self
            .character(speaker)
            .ok_or_else(|| SceneError::UnknownCharacter(speaker.clone()))?;
        let limit = FACING_CONE_HALF_ANGLE_DEG.to_radians();
        let mut best: Option<(f64, &Character)> = None;
        for other in self.characters.iter().filter(|c| c.id != s.id) {
            let bearing = (other.position - s.position).horizontal();
            let Some(angle) = s.facing.horizontal().angle_to(bearing) else {
                continue;
            };
            if angle > limit + 1e-12 {
                continue;
            }
            let d = bearing.length();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, other));
            }
        }
        Ok(best.map(|(_, c)| c.id.clone()))
    }

    /// Ids of every zone containing the point (inclusive), sorted by id.
    pub fn zone_membership(&self, position: Vec3) -> Vec<EntityId> {
        let mut ids: Vec<EntityId> = self
            .zones
            .iter()
            .filter(|z| z.bounds().contains(position))
            .map(|z| z.id.clone())
            .collect();
        ids.sort();
        ids
    }

    /// Characters other than `id`, nearest first (ties keep scene order).
    pub fn nearest_other_character(&self, id: &EntityId) -> Option<EntityId> {
        let me = self.character(id)?;
        self.characters
            .iter()
            .filter(|c| c.id != *id)
            .map(|c| (c.position.distance(me.position), c))
            .fold(None, |best: Option<(f64, &Character)>, (d, c)| match best {
                Some((bd, _)) if bd <= d => best,
                _ => Some((d, c)),
            })
            .map(|(_, c)| c.id.clone())
    }

    /// Checks every structural invariant; returns the first violation.
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Invalid(m));
        if !self.stage_bounds.has_positive_extents() {
            return bad("stage bounds must have positive extents".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.characters {
            if !seen.insert(("c", c.id.clone())) {
                return bad(format!("duplicate character id `{}`", c.id));
            }
            if !c.position.is_finite() || !self.stage_bounds.contains(c.position) {
                return bad(format!("character `{}` is outside the stage", c.id));
            }
            if (c.facing.length() - 1.0).abs() > FACING_TOLERANCE || c.facing.y.abs() > FACING_TOLERANCE {
                return bad(format!("character `{}` facing is not a unit stage-plane vector", c.id));
            }
            if let Some(p) = &c.held_prop {
                match self.prop(p).and_then(|p| p.attached_to.as_ref()) {
                    Some(att) if att.character == c.id => {}
                    _ => return bad(format!("character `{}` holds unattached prop `{p}`", c.id)),
                }
            }
            if c.state == CharacterState::HeldByUser
                && self
                    .characters
                    .iter()
                    .filter(|o| o.state == CharacterState::HeldByUser)
                    .count()
                    > 1
            {
                return bad("more than one character is held".into());
            }
        }
        for p in &self.props {
            if !seen.insert(("p", p.id.clone())) {
                return bad(format!("duplicate prop id `{}`", p.id));
            }
            if !p.position.is_finite() || !self.stage_bounds.contains(p.position) {
                return bad(format!("prop `{}` is outside the stage", p.id));
            }
            if let Some(att) = &p.attached_to {
                let Some(host) = self.character(&att.character) else {
                    return bad(format!("prop `{}` attached to unknown character", p.id));
                };
                if host.held_prop.as_ref() != Some(&p.id) {
                    return bad(format!("prop `{}` attachment not mirrored by host", p.id));
                }
                if self
                    .stage_bounds
                    .clamp(host.hand_position(att.hand))
                    .distance(p.position)
                    > 1e-9
                {
                    return bad(format!("prop `{}` drifted from its hand zone", p.id));
                }
            }
        }
        for z in &self.zones {
            if !seen.insert(("z", z.id.clone())) {
                return bad(format!("duplicate zone id `{}`", z.id));
            }
            if !z.bounds().has_positive_extents() {
                return bad(format!("zone `{}` has non-positive extents", z.id));
            }
        }
        Ok(())
    }
}
