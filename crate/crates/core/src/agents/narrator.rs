use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{confidence_of, feature, IntentFeature, Label, Salience};
use crate::backend::{field, BackendError, GenerationBackend};
use crate::log::{overridden_ids, speech_lines, DialogueLine, InteractionEvent, SessionLog};
use crate::prompts::{render, PromptKind};
use crate::scene::{EntityId, SceneState, StoryRoleConfiguration};
use crate::text::{bigram_jaccard, classify_emotion, contains_phrase, normalized, Emotion};

/// Progression of an exact repeat, and the floor of every other line.
pub const PROGRESSION_FLOOR: f64 = 0.1;
pub const NEW_ENTITY_WEIGHT: f64 = 0.4;
pub const ARC_SHIFT_WEIGHT: f64 = 0.3;
pub const FRESHNESS_WEIGHT: f64 = 0.3;

const PRIOR_DIALOGUE_LINES: usize = 6;
const NEUTRAL: &str = "neutral";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterArc {
    pub character: EntityId,
    pub emotional_state: String,
    pub goals: Vec<String>,
    pub unresolved_tensions: Vec<String>,
    pub last_updated: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NarratorOutput {
    pub features: Vec<IntentFeature>,
    pub emotion: Option<Emotion>,
    pub arc_shift: bool,
    /// Set when the backend failed and the lexicon stood in for it.
    pub backend_error: Option<BackendError>,
}

/// N from its three terms, clamped to [0.1, 1].
pub fn progression(new_entities: usize, arc_shift: bool, overlap: f64) -> f64 {
    let shift = if arc_shift { 1.0 } else { 0.0 };
    (NEW_ENTITY_WEIGHT * new_entities as f64 + ARC_SHIFT_WEIGHT * shift + FRESHNESS_WEIGHT * (1.0 - overlap))
        .clamp(PROGRESSION_FLOOR, 1.0)
}

/// Speaker, addressee and every character or prop named in the line.
pub fn mentioned_entities(scene: &SceneState, line: &DialogueLine) -> BTreeSet<EntityId> {
    let mut out = BTreeSet::new();
    out.insert(line.speaker.clone());
    if let Some(a) = &line.addressee {
        out.insert(a.clone());
    }
    for c in &scene.characters {
        if c.name_terms().any(|n| contains_phrase(&line.text, n)) {
            out.insert(c.id.clone());
        }
    }
    for p in &scene.props {
        if p.mention_terms().iter().any(|n| contains_phrase(&line.text, n)) {
            out.insert(p.id.clone());
        }
    }
    out
}

/// Surviving lines logged before `event_id`, judged with overrides known at that point.
fn prior_lines(log: &SessionLog, event_id: u64) -> Vec<DialogueLine> {
    let upto = log
        .events()
        .iter()
        .position(|e| e.event_id == event_id)
        .map_or(log.len(), |i| i + 1);
    let prefix = &log.events()[..upto];
    let gone = overridden_ids(prefix);
    speech_lines(
        prefix[..upto.saturating_sub(1)]
            .iter()
            .filter(|e| !gone.contains(&e.event_id)),
    )
}

fn clause_for(emotion: Option<Emotion>, addressee: Option<&str>) -> String {
    let (with_object, alone) = match emotion {
        Some(Emotion::Angry) => ("confronts", "rages"),
        Some(Emotion::Sad) => ("pleads with", "grieves"),
        Some(Emotion::Afraid) => ("warns", "trembles"),
        Some(Emotion::Joyful) => ("cheers", "rejoices"),
        Some(Emotion::Calm) | None => ("speaks to", "speaks"),
    };
    match addressee {
        Some(a) => format!("{with_object} {a}"),
        None => alone.to_owned(),
    }
}

#[derive(Debug, Clone)]
pub struct NarratorAgent {
    arcs: BTreeMap<EntityId, CharacterArc>,
}

impl NarratorAgent {
    pub fn new(scene: &SceneState, roles: &StoryRoleConfiguration) -> Self {
        let arcs = scene
            .characters
            .iter()
            .map(|c| {
                let goals = roles
                    .characters
                    .get(&c.role_config_ref)
                    .map(|r| vec![r.motivation.clone()])
                    .unwrap_or_default();
                let arc = CharacterArc {
                    character: c.id.clone(),
                    emotional_state: NEUTRAL.to_owned(),
                    goals,
                    unresolved_tensions: Vec::new(),
                    last_updated: 0,
                };
                (c.id.clone(), arc)
            })
            .collect();
        Self { arcs }
    }

    pub fn arc(&self, id: &EntityId) -> Option<&CharacterArc> {
        self.arcs.get(id)
    }

    pub fn arcs(&self) -> impl Iterator<Item = &CharacterArc> {
        self.arcs.values()
    }

    /// The narrator analysis prompt for a logged speech event.
    pub fn prompt(
        scene: &SceneState,
        roles: &StoryRoleConfiguration,
        prior: &[DialogueLine],
        event: &InteractionEvent,
    ) -> String {
        let text = event.payload.text().unwrap_or_default();
        let role = scene
            .character(&event.actor)
            .and_then(|c| roles.characters.get(&c.role_config_ref));
        let history = prior
            .iter()
            .rev()
            .take(PRIOR_DIALOGUE_LINES)
            .rev()
            .map(|l| format!("{}: {}", scene.display_name(&l.speaker), l.text))
            .collect::<Vec<_>>()
            .join(" | ");
        let vars = [
            ("CharacterName", scene.display_name(&event.actor)),
            ("MostRecentUtterance", text.replace('\n', " ")),
            (
                "RecentDialogueHistory",
                if history.is_empty() { "(none)".into() } else { history },
            ),
            ("NarrativeRole", role.map(|r| r.role.clone()).unwrap_or_default()),
            (
                "CharacterMotivation",
                role.map(|r| r.motivation.clone()).unwrap_or_default(),
            ),
            ("KeyTraits", role.map(|r| r.traits.clone()).unwrap_or_default()),
            (
                "Summary of tensions and alliances",
                role.map(|r| r.relationships.clone()).unwrap_or_default(),
            ),
        ];
        let body = render(PromptKind::Narrator.template(), &vars).expect("narrator template placeholders are fixed");
        format!(
            "{}\nEnd with one line: EMOTION: <angry|sad|afraid|joyful|calm|none>\n",
            body.trim_end()
        )
    }

    /// Observes one speech event already appended to `log`.
    pub fn observe(
        &mut self,
        log: &SessionLog,
        scene: &SceneState,
        roles: &StoryRoleConfiguration,
        event: &InteractionEvent,
        backend: &dyn GenerationBackend,
    ) -> NarratorOutput {
        let Some(text) = event.payload.text().filter(|_| event.kind.is_speech()) else {
            return NarratorOutput {
                features: Vec::new(),
                emotion: None,
                arc_shift: false,
                backend_error: None,
            };
        };
        let prior = prior_lines(log, event.event_id);
        let line = DialogueLine {
            event_id: event.event_id,
            t: event.t,
            speaker: event.actor.clone(),
            addressee: event.payload.addressee().cloned(),
            text: text.to_owned(),
            kind: event.kind,
        };

        let prompt = Self::prompt(scene, roles, &prior, event);
        let (emotion, backend_error) = match backend.analyze(&prompt).and_then(|lines| {
            let v = field(&lines, "EMOTION").ok_or_else(|| BackendError::Malformed("no EMOTION line".into()))?;
            if v.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                Emotion::parse(v)
                    .map(Some)
                    .ok_or_else(|| BackendError::Malformed(format!("unknown emotion `{v}`")))
            }
        }) {
            Ok(e) => (e, None),
            Err(err) => {
                tracing::warn!(%err, "narrator analysis fell back to the lexicon");
                (classify_emotion(text), Some(err))
            }
        };

        let arc = self.arcs.entry(event.actor.clone()).or_insert_with(|| CharacterArc {
            character: event.actor.clone(),
            emotional_state: NEUTRAL.to_owned(),
            goals: Vec::new(),
            unresolved_tensions: Vec::new(),
            last_updated: 0,
        });
        let arc_shift = emotion.is_some_and(|e| e.as_str() != arc.emotional_state);
        if let Some(e) = emotion {
            arc.emotional_state = e.as_str().to_owned();
            if let Some(a) = &line.addressee {
                let name = scene.display_name(a);
                match e {
                    Emotion::Angry | Emotion::Afraid => {
                        if !arc.unresolved_tensions.contains(&name) {
                            arc.unresolved_tensions.push(name);
                        }
                    }
                    Emotion::Joyful | Emotion::Calm => arc.unresolved_tensions.retain(|n| n != &name),
                    Emotion::Sad => {}
                }
            }
        }
        arc.last_updated = event.t;

        let repeat = prior.last().is_some_and(|p| normalized(&p.text) == normalized(text));
        let n = if repeat {
            PROGRESSION_FLOOR
        } else {
            let known: BTreeSet<EntityId> = prior.iter().flat_map(|l| mentioned_entities(scene, l)).collect();
            let new = mentioned_entities(scene, &line).difference(&known).count();
            let overlap = prior.iter().map(|p| bigram_jaccard(text, &p.text)).fold(0.0, f64::max);
            progression(new, arc_shift, overlap)
        };

        let addressee_name = line.addressee.as_ref().map(|a| scene.display_name(a));
        let mut f = feature(
            Label::CharacterSpeech,
            &event.actor,
            line.addressee.as_ref(),
            scene.entity_position(&event.actor).unwrap_or_default(),
            event.t,
            confidence_of(event.kind),
            Salience::N(n),
            clause_for(emotion, addressee_name.as_deref()),
            event.event_id,
        );
        f.tone = emotion.map(|e| e.tone_noun().to_owned());
        NarratorOutput {
            features: vec![f],
            emotion,
            arc_shift,
            backend_error,
        }
    }
}
