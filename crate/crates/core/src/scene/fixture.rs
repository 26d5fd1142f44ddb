//! Declarative scene documents and the bundled scenes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Character, CharacterState, EntityId, Prop, SceneError, SceneState, Zone};
use crate::geometry::{Aabb, Vec3};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskMode {
    GoalDriven(String),
    OpenEnded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterRole {
    pub role: String,
    pub motivation: String,
    pub traits: String,
    pub relationships: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryRoleConfiguration {
    #[serde(default)]
    pub scene_id: String,
    pub location: String,
    pub time: String,
    pub characters: BTreeMap<String, CharacterRole>,
    pub task: TaskMode,
}

/// A scripted line shown before the recorded dialogue in screenplays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreambleLine {
    pub speaker: EntityId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeatTitle {
    pub cue: String,
    pub title: String,
}

/// Seed tables for the deterministic backend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeterministicScript {
    #[serde(default)]
    pub beat_titles: Vec<BeatTitle>,
    /// Reply templates by role; `{speaker}`, `{addressee}` and `{location}` expand.
    #[serde(default)]
    pub reply_templates: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterSpec {
    pub id: EntityId,
    pub name: String,
    pub position: Vec3,
    pub facing: Vec3,
    pub role_config_ref: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropSpec {
    pub id: EntityId,
    pub name: String,
    pub position: Vec3,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub scene_id: String,
    pub title: String,
    pub environment_label: String,
    pub stage_bounds: Aabb,
    pub characters: Vec<CharacterSpec>,
    pub props: Vec<PropSpec>,
    pub zones: Vec<Zone>,
    pub roles: StoryRoleConfiguration,
    #[serde(default)]
    pub preamble_lines: Vec<PreambleLine>,
    #[serde(default)]
    pub deterministic_script: DeterministicScript,
}

/// A loaded scene: initial state, role configuration and export extras.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFixture {
    pub title: String,
    pub scene: SceneState,
    pub roles: StoryRoleConfiguration,
    pub preamble: Vec<PreambleLine>,
    pub script: DeterministicScript,
}

impl SceneFixture {
    pub fn from_document(doc: SceneDocument) -> Result<Self, SceneError> {
        let scene = SceneState {
            scene_id: doc.scene_id.clone(),
            characters: doc
                .characters
                .into_iter()
                .map(|c| Character {
                    id: c.id,
                    name: c.name,
                    position: c.position,
                    facing: c.facing,
                    held_prop: None,
                    state: CharacterState::Idle,
                    role_config_ref: c.role_config_ref,
                    aliases: c.aliases,
                })
                .collect(),
            props: doc
                .props
                .into_iter()
                .map(|p| Prop {
                    id: p.id,
                    name: p.name,
                    position: p.position,
                    attached_to: None,
                    aliases: p.aliases,
                    tags: p.tags,
                })
                .collect(),
            zones: doc.zones,
            stage_bounds: doc.stage_bounds,
            environment_label: doc.environment_label,
            clock: 0,
        };
        scene.validate()?;
        if scene.characters.len() < 2 {
            return Err(SceneError::Invalid("a scene needs at least two characters".into()));
        }
        for c in &scene.characters {
            if !doc.roles.characters.contains_key(&c.role_config_ref) {
                return Err(SceneError::Invalid(format!(
                    "role `{}` of `{}` is not configured",
                    c.role_config_ref, c.id
                )));
            }
        }
        for line in &doc.preamble_lines {
            if scene.character(&line.speaker).is_none() {
                return Err(SceneError::UnknownCharacter(line.speaker.clone()));
            }
        }
        let mut roles = doc.roles;
        roles.scene_id = doc.scene_id;
        Ok(SceneFixture {
            title: doc.title,
            scene,
            roles,
            preamble: doc.preamble_lines,
            script: doc.deterministic_script,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, SceneError> {
        let doc: SceneDocument = serde_json::from_str(json).map_err(|e| SceneError::Invalid(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn role_of(&self, id: &EntityId) -> Option<&super::CharacterRole> {
        let c = self.scene.character(id)?;
        self.roles.characters.get(&c.role_config_ref)
    }
}

const BUNDLED: &[(&str, &str)] = &[
    ("tutorial", include_str!("../../resources/fixtures/tutorial.json")),
    ("aladdin", include_str!("../../resources/fixtures/aladdin.json")),
    ("robinhood", include_str!("../../resources/fixtures/robinhood.json")),
];

pub fn fixture_ids() -> Vec<&'static str> {
    BUNDLED.iter().map(|(id, _)| *id).collect()
}

pub fn bundled_fixture(id: &str) -> Option<SceneFixture> {
    let (_, json) = BUNDLED.iter().find(|(k, _)| *k == id)?;
    Some(SceneFixture::from_json(json).expect("bundled fixtures are valid"))
}
