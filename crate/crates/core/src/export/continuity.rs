use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ExportBundle;
use crate::agents::Label;
use crate::scene::EntityId;
use crate::text::contains_phrase;

/// Zone tag that marks a way off stage.
pub const EXIT_TAG: &str = "Exit";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContinuityWarning {
    PropBeforeIntroduction {
        prop: EntityId,
        marble_id: String,
        introduced_in: String,
    },
    DialogueAfterExit {
        character: EntityId,
        marble_id: String,
        exit_marble: String,
    },
}

impl fmt::Display for ContinuityWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContinuityWarning::PropBeforeIntroduction {
                prop,
                marble_id,
                introduced_in,
            } => write!(f, "{marble_id} refers to `{prop}` before {introduced_in} introduces it"),
            ContinuityWarning::DialogueAfterExit {
                character,
                marble_id,
                exit_marble,
            } => write!(f, "`{character}` speaks in {marble_id} after leaving in {exit_marble}"),
        }
    }
}

#[derive(Default)]
struct BeatFacts {
    /// Props targeted by any feature of an action.
    introduces: BTreeSet<EntityId>,
    /// Props named in dialogue.
    mentions: BTreeSet<EntityId>,
    speakers: BTreeSet<EntityId>,
    exits: BTreeSet<EntityId>,
    returns: BTreeSet<EntityId>,
}

fn facts(bundle: &ExportBundle) -> Vec<(String, BeatFacts)> {
    let exit_zones: BTreeSet<&EntityId> = bundle
        .zones
        .iter()
        .filter(|z| z.tag == EXIT_TAG)
        .map(|z| &z.id)
        .collect();
    let props: BTreeMap<&EntityId, &Vec<String>> = bundle.props.iter().map(|p| (&p.id, &p.terms)).collect();
    bundle
        .beat_lines()
        .into_iter()
        .map(|(m, lines)| {
            let mut f = BeatFacts::default();
            for a in &bundle.frame_of(m).actions {
                for o in a.objects.iter().chain(a.target.as_ref()) {
                    if props.contains_key(o) {
                        f.introduces.insert(o.clone());
                    }
                }
                if a.objects
                    .iter()
                    .chain(a.target.as_ref())
                    .any(|o| exit_zones.contains(o))
                {
                    if a.labels.contains(&Label::ZoneEntry) {
                        f.exits.insert(a.actor.clone());
                    }
                    if a.labels.contains(&Label::ZoneExit) {
                        f.returns.insert(a.actor.clone());
                    }
                }
            }
            for l in lines {
                f.speakers.insert(l.speaker.clone());
                for (id, terms) in &props {
                    if terms.iter().any(|t| contains_phrase(&l.text, t)) {
                        f.mentions.insert((*id).clone());
                    }
                }
            }
            (m.marble_id.clone(), f)
        })
        .collect()
}

/// Advisory warnings from scanning the timeline in order.
///
/// A prop with an introducing action anywhere on the timeline warns in every
/// beat that mentions it before that action is reached. A character that walks
/// into an exit zone warns in every later beat where it speaks, until a beat
/// where it walks back out.
pub fn continuity_notes(bundle: &ExportBundle) -> Vec<ContinuityWarning> {
    let beats = facts(bundle);
    let mut first_intro: BTreeMap<EntityId, String> = BTreeMap::new();
    for (id, f) in &beats {
        for p in &f.introduces {
            first_intro.entry(p.clone()).or_insert_with(|| id.clone());
        }
    }
    let mut out = Vec::new();
    let mut introduced: BTreeSet<EntityId> = BTreeSet::new();
    let mut gone: BTreeMap<EntityId, String> = BTreeMap::new();
    for (id, f) in &beats {
        for p in &f.mentions {
            if !introduced.contains(p) && !f.introduces.contains(p) {
                if let Some(intro) = first_intro.get(p) {
                    out.push(ContinuityWarning::PropBeforeIntroduction {
                        prop: p.clone(),
                        marble_id: id.clone(),
                        introduced_in: intro.clone(),
                    });
                }
            }
        }
        introduced.extend(f.introduces.iter().cloned());
        for c in &f.returns {
            gone.remove(c);
        }
        for c in &f.speakers {
            if f.exits.contains(c) || f.returns.contains(c) {
                continue;
            }
            if let Some(exit) = gone.get(c) {
                out.push(ContinuityWarning::DialogueAfterExit {
                    character: c.clone(),
                    marble_id: id.clone(),
                    exit_marble: exit.clone(),
                });
            }
        }
        for c in &f.exits {
            gone.insert(c.clone(), id.clone());
        }
    }
    out
}
