//! Synopsis, screenplay and continuity notes over the assembled marbles.

mod continuity;
mod screenplay;
mod summary;

pub use continuity::{continuity_notes, ContinuityWarning};
pub use screenplay::{
    export_screenplay, lint_screenplay, CastEntry, LintedLine, Provenance, Screenplay, ScreenplayBeat, ScreenplayLine,
    DIALOGUE_MARKER, PROVENANCE_NOTE,
};
pub use summary::{export_summary, quoted_segments, synopsis_digest, template_synopsis, validate_synopsis};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::StoryMarble;
use crate::backend::BackendError;
use crate::fusion::IntentFrame;
use crate::log::{DialogueLine, Metadata};
use crate::scene::{EntityId, PreambleLine, SceneState, StoryRoleConfiguration};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExportError {
    #[error("the timeline is empty")]
    EmptyTimeline,
    #[error("marble `{0}` links to an unknown frame")]
    UnknownFrame(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExportFormat {
    Summary,
    Screenplay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CastMember {
    pub id: EntityId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropInfo {
    pub id: EntityId,
    /// Lowercase words that refer to the prop.
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneInfo {
    pub id: EntityId,
    pub tag: String,
}

/// Everything an export reads, frozen at export time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub title: String,
    pub environment_label: String,
    pub roles: StoryRoleConfiguration,
    /// Scene order.
    pub cast: Vec<CastMember>,
    pub props: Vec<PropInfo>,
    pub zones: Vec<ZoneInfo>,
    pub preamble: Vec<PreambleLine>,
    /// Timeline order.
    pub marbles: Vec<StoryMarble>,
    pub frames: BTreeMap<String, IntentFrame>,
    /// Surviving lines in log order.
    pub dialogue: Vec<DialogueLine>,
    pub metadata: Metadata,
}

impl ExportBundle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        title: &str,
        scene: &SceneState,
        roles: &StoryRoleConfiguration,
        preamble: &[PreambleLine],
        marbles: Vec<StoryMarble>,
        frames: &[IntentFrame],
        dialogue: Vec<DialogueLine>,
        metadata: Metadata,
    ) -> Result<Self, ExportError> {
        if marbles.is_empty() {
            return Err(ExportError::EmptyTimeline);
        }
        let frames: BTreeMap<String, IntentFrame> = frames.iter().map(|f| (f.frame_id.clone(), f.clone())).collect();
        if let Some(m) = marbles.iter().find(|m| !frames.contains_key(&m.frame_id)) {
            return Err(ExportError::UnknownFrame(m.marble_id.clone()));
        }
        Ok(Self {
            title: title.to_owned(),
            environment_label: scene.environment_label.clone(),
            roles: roles.clone(),
            cast: scene
                .characters
                .iter()
                .map(|c| CastMember {
                    id: c.id.clone(),
                    name: c.name.clone(),
                })
                .collect(),
            props: scene
                .props
                .iter()
                .map(|p| PropInfo {
                    id: p.id.clone(),
                    terms: p.mention_terms(),
                })
                .collect(),
            zones: scene
                .zones
                .iter()
                .map(|z| ZoneInfo {
                    id: z.id.clone(),
                    tag: z.tag.clone(),
                })
                .collect(),
            preamble: preamble.to_vec(),
            marbles,
            frames,
            dialogue,
            metadata,
        })
    }

    pub fn name_of(&self, id: &EntityId) -> String {
        self.cast
            .iter()
            .find(|c| &c.id == id)
            .map_or_else(|| id.to_string(), |c| c.name.clone())
    }

    pub fn frame_of(&self, marble: &StoryMarble) -> &IntentFrame {
        &self.frames[&marble.frame_id]
    }

    /// Lines grouped by marble, timeline order. Each line belongs to the
    /// earliest (by play time) timeline marble whose frame ends at or after
    /// it; lines after the last frame join the last one.
    pub fn beat_lines(&self) -> Vec<(&StoryMarble, Vec<&DialogueLine>)> {
        let mut chrono: Vec<usize> = (0..self.marbles.len()).collect();
        chrono.sort_by_key(|&i| {
            let f = self.frame_of(&self.marbles[i]);
            (f.t_end, f.t_start, i)
        });
        let mut groups: Vec<Vec<&DialogueLine>> = vec![Vec::new(); self.marbles.len()];
        for line in &self.dialogue {
            let owner = chrono
                .iter()
                .copied()
                .find(|&i| self.frame_of(&self.marbles[i]).t_end >= line.t)
                .unwrap_or(*chrono.last().expect("bundle has marbles"));
            groups[owner].push(line);
        }
        self.marbles.iter().zip(groups).collect()
    }
}

/// Everything an export produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportArtifacts {
    pub synopsis: String,
    pub screenplay_text: String,
    pub screenplay: Screenplay,
    pub continuity: Vec<ContinuityWarning>,
}

pub fn export_all(
    bundle: &ExportBundle,
    backend: &dyn crate::backend::GenerationBackend,
) -> Result<ExportArtifacts, ExportError> {
    let screenplay = export_screenplay(bundle)?;
    Ok(ExportArtifacts {
        synopsis: export_summary(bundle, backend)?,
        screenplay_text: screenplay.render(),
        screenplay,
        continuity: continuity_notes(bundle),
    })
}

#[cfg(test)]
pub(crate) mod testkit {
    use super::*;
    use crate::agents::Label;
    use crate::assembly::{MarbleCard, SceneSnapshot};
    use crate::fusion::{ActionDescriptor, ClassifiedBy, IntentType};
    use crate::log::{recount, EventKind};
    use crate::scene::bundled_fixture;

    pub fn line(id: u64, t: u64, who: &str, text: &str, ai: bool) -> DialogueLine {
        DialogueLine {
            event_id: id,
            t,
            speaker: who.into(),
            addressee: None,
            text: text.into(),
            kind: if ai {
                EventKind::AIReactiveSpeech
            } else {
                EventKind::UserSpeech
            },
        }
    }

    pub fn action(actor: &str, label: Label, target: Option<&str>) -> ActionDescriptor {
        ActionDescriptor {
            actor: actor.into(),
            target: target.map(EntityId::from),
            objects: target.map(EntityId::from).into_iter().collect(),
            labels: vec![label],
            description: String::new(),
            e: 0.5,
            s: 0.0,
            n: 0.0,
            r: 0.2,
            t_first: 0,
            t_last: 0,
            feature_ids: Vec::new(),
            first_time_social: false,
        }
    }

    /// One frame per entry: (t_end, summary, tension, actions).
    pub fn bundle(beats: Vec<(u64, &str, u8, Vec<ActionDescriptor>)>, dialogue: Vec<DialogueLine>) -> ExportBundle {
        let fx = bundled_fixture("robinhood").unwrap();
        let mut frames = Vec::new();
        let mut marbles = Vec::new();
        for (i, (t_end, summary, tension, actions)) in beats.into_iter().enumerate() {
            let frame_id = format!("f{i}");
            frames.push(IntentFrame {
                frame_id: frame_id.clone(),
                actions,
                characters: vec!["robin".into()],
                t_start: t_end,
                t_end,
                tension,
                intent_type: IntentType::RisingAction,
                summary: summary.into(),
                tone: "neutral".into(),
                function: String::new(),
                source_features: Vec::new(),
                classified_by: ClassifiedBy::Rules,
                log_cursor: 0,
            });
            marbles.push(StoryMarble {
                marble_id: format!("m{}", i + 1),
                frame_id,
                card: MarbleCard {
                    summary: summary.into(),
                    characters: vec!["Robin Hood".into()],
                    snapshot: SceneSnapshot::capture(&fx.scene, 0),
                },
                capture_t: t_end,
                timeline_position: i,
            });
        }
        let events_end = dialogue.iter().map(|l| l.t).max().unwrap_or(0);
        let mut counts = recount(&[]);
        for l in &dialogue {
            *counts.get_mut(&l.kind).unwrap() += 1;
        }
        ExportBundle::new(
            &fx.title,
            &fx.scene,
            &fx.roles,
            &fx.preamble,
            marbles,
            &frames,
            dialogue,
            Metadata {
                duration_ms: events_end,
                export_time_ms: None,
                interaction_counts: counts,
            },
        )
        .unwrap()
    }

    pub fn reorder(b: &ExportBundle, order: &[usize]) -> ExportBundle {
        let mut out = b.clone();
        out.marbles = order.iter().map(|&i| b.marbles[i].clone()).collect();
        for (i, m) in out.marbles.iter_mut().enumerate() {
            m.timeline_position = i;
        }
        out
    }
}
