//! Tension, intent type and summary for a drained batch.

use serde::{Deserialize, Serialize};

use super::{ClassifiedBy, IntentType, RankedCandidate};
use crate::backend::{field, BackendError, GenerationBackend};
use crate::log::{speech_lines, DialogueLine, SessionLog};
use crate::prompts::{render, PromptKind};
use crate::scene::{BeatTitle, SceneState, StoryRoleConfiguration};
use crate::text::{classify_emotion, contains_phrase, tension_of};

/// Tension at or above which a non-declining frame is a climax.
pub const CLIMAX_TENSION: u8 = 8;
/// Session progress before which frames open the story.
pub const INCITING_UNTIL: f64 = 0.15;
/// Session progress from which frames resolve it.
pub const RESOLUTION_FROM: f64 = 0.9;

const PROGRESS_KEY: &str = "SESSION PROGRESS";
const PREVIOUS_KEY: &str = "PREVIOUS TENSION";
const ACTIONS_HEADER: &str = "ACTIONS:";
const DIALOGUE_HEADER: &str = "DIALOGUE:";
const DIALOGUE_END: &str = "END DIALOGUE";
const FORMAT_SUFFIX: &str = "After the three lines, add two more:\nTENSION: <integer from 1 (calm) to 10 (extreme conflict)>\nINTENT: <IncitingIncident|RisingAction|Climax|FallingAction|Resolution>\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub tension: u8,
    pub intent_type: IntentType,
    pub summary: String,
    pub tone: String,
    pub function: String,
}

pub struct ClassifyContext<'a> {
    pub scene: &'a SceneState,
    pub roles: &'a StoryRoleConfiguration,
    pub log: &'a SessionLog,
    pub beat_titles: &'a [BeatTitle],
    pub session_length_ms: u64,
    pub previous_tension: Option<u8>,
    pub backend: &'a dyn GenerationBackend,
}

pub fn intent_rule(tension: u8, previous: Option<u8>, progress: f64) -> IntentType {
    let not_falling = previous.is_none_or(|p| tension >= p);
    if tension >= CLIMAX_TENSION && not_falling {
        IntentType::Climax
    } else if progress >= RESOLUTION_FROM {
        IntentType::Resolution
    } else if progress < INCITING_UNTIL {
        IntentType::IncitingIncident
    } else if not_falling {
        IntentType::RisingAction
    } else {
        IntentType::FallingAction
    }
}

fn function_of(t: IntentType) -> &'static str {
    match t {
        IntentType::IncitingIncident => "Sets the conflict in motion.",
        IntentType::RisingAction => "Raises the stakes between the characters.",
        IntentType::Climax => "Brings the central conflict to a head.",
        IntentType::FallingAction => "Lets the consequences of the conflict play out.",
        IntentType::Resolution => "Settles where the characters end up.",
    }
}

/// The offline classifier: conflict density for tension, progress for intent,
/// cue table for the summary.
pub fn rule_classification(
    dialogue: &[String],
    progress: f64,
    previous: Option<u8>,
    beat_titles: &[BeatTitle],
    top_description: &str,
) -> Classification {
    let text = dialogue.join(" ");
    let tension = tension_of(&text);
    let intent_type = intent_rule(tension, previous, progress);
    let summary = beat_titles
        .iter()
        .find(|b| contains_phrase(&text, &b.cue))
        .map(|b| b.title.clone())
        .unwrap_or_else(|| top_description.to_owned());
    let tone = classify_emotion(&text).map_or("neutral", |e| e.tone_noun()).to_owned();
    Classification {
        tension,
        intent_type,
        summary,
        tone,
        function: function_of(intent_type).to_owned(),
    }
}

/// Lines spoken in the batch's source events, minus lines already overridden.
pub fn frame_dialogue(candidates: &[RankedCandidate], log: &SessionLog) -> Vec<DialogueLine> {
    let sources: std::collections::BTreeSet<u64> = candidates
        .iter()
        .flat_map(|c| c.features.iter().map(|f| f.source_event))
        .collect();
    let gone = log.overridden_ids();
    speech_lines(
        log.events()
            .iter()
            .filter(|e| sources.contains(&e.event_id) && !gone.contains(&e.event_id)),
    )
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Appendix-style prompt for the top action plus progress, ranked actions and dialogue.
pub fn classification_prompt(
    candidates: &[RankedCandidate],
    dialogue: &[DialogueLine],
    scene: &SceneState,
    roles: &StoryRoleConfiguration,
    progress: f64,
    previous: Option<u8>,
) -> String {
    let top = candidates.first().and_then(|c| c.primary());
    let actor = top.map(|f| f.actor.clone());
    let name = actor.as_ref().map(|a| scene.display_name(a)).unwrap_or_default();
    let role = actor
        .as_ref()
        .and_then(|a| scene.character(a))
        .and_then(|c| roles.characters.get(&c.role_config_ref));
    let labels: Vec<&str> = candidates
        .first()
        .map(|c| {
            let mut ls: Vec<&str> = Vec::new();
            for f in &c.features {
                if !ls.contains(&f.semantic_label.as_str()) {
                    ls.push(f.semantic_label.as_str());
                }
            }
            ls
        })
        .unwrap_or_default();
    let target = top
        .and_then(|f| f.target.as_ref())
        .map(|t| scene.display_name(t))
        .unwrap_or_else(|| "none".to_owned());
    let mut context = scene.environment_label.clone();
    if let Some(a) = &actor {
        if let Some(p) = scene.entity_position(a) {
            let zones: Vec<String> = scene
                .zone_membership(p)
                .iter()
                .map(|z| crate::agents::humanize(z.as_str()))
                .collect();
            if !zones.is_empty() {
                context.push_str(&format!(", {name} is in {}", zones.join(" and ")));
            }
        }
    }
    let vars = [
        ("CharacterName", name.clone()),
        ("Role", role.map(|r| r.role.clone()).unwrap_or_default()),
        (
            "CharacterMotivation",
            role.map(|r| r.motivation.clone()).unwrap_or_default(),
        ),
        ("KeyTraits", role.map(|r| r.traits.clone()).unwrap_or_default()),
        ("CharacterName", name),
        ("ActionType", labels.join(" + ")),
        ("TargetObject", target),
        ("Local description of spatial or conversational context", context),
    ];
    let mut out = render(PromptKind::IntentFrame.template(), &vars).expect("intent frame placeholders are fixed");
    out.truncate(out.trim_end().len());
    out.push_str(&format!("\n\n{PROGRESS_KEY}: {progress:.4}\n"));
    match previous {
        Some(p) => out.push_str(&format!("{PREVIOUS_KEY}: {p}\n")),
        None => out.push_str(&format!("{PREVIOUS_KEY}: none\n")),
    }
    out.push_str(ACTIONS_HEADER);
    out.push('\n');
    for (i, c) in candidates.iter().enumerate() {
        out.push_str(&format!(
            "{}. {} (R={:.4})\n",
            i + 1,
            one_line(&c.description(scene)),
            c.r
        ));
    }
    out.push_str(DIALOGUE_HEADER);
    out.push('\n');
    for l in dialogue {
        out.push_str(&format!("{}: {}\n", scene.display_name(&l.speaker), one_line(&l.text)));
    }
    out.push_str(DIALOGUE_END);
    out.push('\n');
    out.push_str(FORMAT_SUFFIX);
    out
}

/// What the offline backend reads back out of a classification prompt.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PromptFacts {
    pub progress: f64,
    pub previous: Option<u8>,
    pub top_description: String,
    pub dialogue: Vec<String>,
}

pub(crate) fn is_classification_prompt(prompt: &str) -> bool {
    prompt.contains(FORMAT_SUFFIX) && prompt.contains(ACTIONS_HEADER)
}

pub(crate) fn parse_prompt_facts(prompt: &str) -> Option<PromptFacts> {
    let lines: Vec<&str> = prompt.lines().collect();
    let value = |key: &str| {
        lines
            .iter()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(':')).map(str::trim))
    };
    let progress = value(PROGRESS_KEY)?.parse().ok()?;
    let previous = match value(PREVIOUS_KEY)? {
        "none" => None,
        v => Some(v.parse().ok()?),
    };
    let a = lines.iter().position(|l| *l == ACTIONS_HEADER)?;
    let d = lines.iter().position(|l| *l == DIALOGUE_HEADER)?;
    let end = lines.iter().position(|l| *l == DIALOGUE_END)?;
    let top_description = lines.get(a + 1..d)?.first().map_or(String::new(), |l| {
        let l = l.split_once(". ").map_or(*l, |(_, rest)| rest);
        l.rsplit_once(" (R=").map_or(l, |(head, _)| head).to_owned()
    });
    let dialogue = lines
        .get(d + 1..end)?
        .iter()
        .map(|l| l.split_once(": ").map_or(*l, |(_, text)| text).to_owned())
        .collect();
    Some(PromptFacts {
        progress,
        previous,
        top_description,
        dialogue,
    })
}

/// Reads Summary/Tone/Function/TENSION/INTENT out of a backend reply.
pub fn parse_classification(lines: &[String]) -> Result<Classification, BackendError> {
    let summary = field(lines, "Summary")
        .filter(|s| !s.is_empty())
        .ok_or_else(|| BackendError::Malformed("missing Summary".into()))?;
    let tension: u8 = field(lines, "TENSION")
        .and_then(|v| v.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .filter(|t| (1..=10).contains(t))
        .ok_or_else(|| BackendError::Malformed("TENSION is not an integer in 1..=10".into()))?;
    let intent_type = field(lines, "INTENT")
        .and_then(IntentType::parse)
        .ok_or_else(|| BackendError::Malformed("unknown INTENT".into()))?;
    Ok(Classification {
        tension,
        intent_type,
        summary: summary.to_owned(),
        tone: field(lines, "Tone").unwrap_or("neutral").to_owned(),
        function: field(lines, "Function")
            .unwrap_or_else(|| function_of(intent_type))
            .to_owned(),
    })
}

/// Asks the backend; falls back to the rules on failure or a malformed reply.
pub fn classify_frame(candidates: &[RankedCandidate], ctx: &ClassifyContext<'_>) -> (Classification, ClassifiedBy) {
    let dialogue = frame_dialogue(candidates, ctx.log);
    let t_end = candidates.iter().map(|c| c.last_t).max().unwrap_or(0);
    let progress = (t_end as f64 / ctx.session_length_ms.max(1) as f64).min(1.0);
    let prompt = classification_prompt(
        candidates,
        &dialogue,
        ctx.scene,
        ctx.roles,
        progress,
        ctx.previous_tension,
    );
    match ctx
        .backend
        .analyze(&prompt)
        .and_then(|lines| parse_classification(&lines))
    {
        Ok(c) => (c, ClassifiedBy::Backend),
        Err(err) => {
            tracing::warn!(%err, "frame classification fell back to rules");
            let texts: Vec<String> = dialogue.into_iter().map(|l| l.text).collect();
            let top = candidates.first().map(|c| c.description(ctx.scene)).unwrap_or_default();
            (
                rule_classification(&texts, progress, ctx.previous_tension, ctx.beat_titles, &top),
                ClassifiedBy::Rules,
            )
        }
    }
}
