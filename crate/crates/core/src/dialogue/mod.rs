//! Turn-taking helpers: who a line is for, who speaks next and what the
//! generation backend gets to see.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
pub use crate::backend::GenerationRequest;
use crate::config::{MAX_TOKEN_BUDGET, MIN_TOKEN_BUDGET};
use crate::log::{DialogueLine, LogError};
use crate::prompts::PromptKind;
use crate::scene::{CharacterState, EntityId, SceneError, SceneState, StoryRoleConfiguration, TaskMode};
use crate::text::{contains_phrase, estimate_tokens};

/// Speech events considered when balancing proactive speakers.
pub const PROACTIVE_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DialogueError {
    #[error("character `{0}` is not held")]
    CharacterNotHeld(EntityId),
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("token budget {0} is below 512")]
    BudgetTooSmall(usize),
    #[error("token budget {0} is above 2048")]
    BudgetTooLarge(usize),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// First character other than the speaker named in the text (scene order),
/// else the one the speaker faces, else the nearest.
pub fn infer_addressee(scene: &SceneState, speaker: &EntityId, text: &str) -> Option<EntityId> {
    scene
        .characters
        .iter()
        .filter(|c| &c.id != speaker)
        .find(|c| c.name_terms().any(|n| contains_phrase(text, n)))
        .map(|c| c.id.clone())
        .or_else(|| scene.faced_character(speaker).ok().flatten())
        .or_else(|| scene.nearest_other_character(speaker))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingReply {
    pub speaker: EntityId,
    pub addressee: EntityId,
    pub requested_at: u64,
    pub cue: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnState {
    /// Time of the last user input (speech, grab or movement).
    pub last_input_t: u64,
    pub last_proactive_t: Option<u64>,
    pub pending_reply: Option<PendingReply>,
    pub ai_speaking: bool,
}

impl TurnState {
    /// When the next proactive line is due.
    pub fn proactive_due(&self, proactive_ms: u64) -> u64 {
        self.last_input_t.max(self.last_proactive_t.unwrap_or(0)) + proactive_ms
    }

    pub fn should_speak_proactively(&self, now: u64, proactive_ms: u64) -> bool {
        !self.ai_speaking && self.pending_reply.is_none() && now >= self.proactive_due(proactive_ms)
    }

    pub fn note_input(&mut self, t: u64) {
        self.last_input_t = self.last_input_t.max(t);
    }
}

/// The non-held character with the fewest lines among the last few speech
/// events; ties go to scene order.
pub fn choose_proactive_speaker(scene: &SceneState, history: &[DialogueLine]) -> Option<EntityId> {
    let recent = &history[history.len().saturating_sub(PROACTIVE_WINDOW)..];
    scene
        .characters
        .iter()
        .filter(|c| c.state != CharacterState::HeldByUser)
        .map(|c| (recent.iter().filter(|l| l.speaker == c.id).count(), c))
        .fold(
            None,
            |best: Option<(usize, &crate::scene::Character)>, (n, c)| match best {
                Some((bn, _)) if bn <= n => best,
                _ => Some((n, c)),
            },
        )
        .map(|(_, c)| c.id.clone())
}

/// Everything assemble_prompt reads.
pub struct PromptInputs<'a> {
    pub scene: &'a SceneState,
    pub roles: &'a StoryRoleConfiguration,
    /// Surviving lines, oldest first.
    pub history: &'a [DialogueLine],
    /// Committed frame summaries, oldest first.
    pub story_so_far: &'a [String],
}

fn scene_context(scene: &SceneState, speaker: &EntityId) -> String {
    let Some(me) = scene.character(speaker) else {
        return String::new();
    };
    let mut parts = Vec::new();
    if let Some(o) = scene.nearest_other_character(speaker) {
        let d = scene.entity_position(&o).map_or(0.0, |p| p.distance(me.position));
        parts.push(format!("{} is {:.1} m from {}", me.name, d, scene.display_name(&o)));
    }
    if let Ok(Some(f)) = scene.faced_character(speaker) {
        parts.push(format!("{} faces {}", me.name, scene.display_name(&f)));
    }
    if let Some(p) = &me.held_prop {
        parts.push(format!("{} holds {}", me.name, scene.display_name(p)));
    }
    for z in scene.zone_membership(me.position) {
        parts.push(format!("{} is in {}", me.name, crate::agents::humanize(z.as_str())));
    }
    for c in scene.characters.iter().filter(|c| c.id != *speaker) {
        if let Some(p) = &c.held_prop {
            parts.push(format!("{} holds {}", c.name, scene.display_name(p)));
        }
    }
    parts.join("; ")
}

/// Builds the request, dropping the oldest history first until the prompt fits.
pub fn assemble_prompt(
    inputs: &PromptInputs<'_>,
    speaker: &EntityId,
    addressee: Option<&EntityId>,
    budget: usize,
    cue: &str,
) -> Result<GenerationRequest, DialogueError> {
    if budget < MIN_TOKEN_BUDGET {
        return Err(DialogueError::BudgetTooSmall(budget));
    }
    if budget > MAX_TOKEN_BUDGET {
        return Err(DialogueError::BudgetTooLarge(budget));
    }
    let scene = inputs.scene;
    let me = scene
        .character(speaker)
        .ok_or_else(|| SceneError::UnknownCharacter(speaker.clone()))?;
    let role = inputs.roles.characters.get(&me.role_config_ref);
    let speaker_role = role.map(|r| r.role.clone()).unwrap_or_default();
    let addressee_name = addressee.map(|a| scene.display_name(a));

    let system_prompt = PromptKind::DialogueSystem.template().trim_end().to_owned();
    let mut head = format!("CHARACTER: {} is the {}.\n", me.name, speaker_role);
    if let Some(r) = role {
        head.push_str(&format!(
            "Motivation: {}\nTraits: {}\nRelationships: {}\n",
            r.motivation, r.traits, r.relationships
        ));
    }
    head.push_str(&format!(
        "SCENE: {} ({}, {})\n",
        scene.environment_label, inputs.roles.location, inputs.roles.time
    ));
    match &inputs.roles.task {
        TaskMode::GoalDriven(goal) => head.push_str(&format!("TASK: {goal}\n")),
        TaskMode::OpenEnded => head.push_str("TASK: Open-ended. Follow the author's lead.\n"),
    }
    head.push_str(&format!("SCENE CONTEXT: {}\n", scene_context(scene, speaker)));
    let instruction = match &addressee_name {
        Some(a) if !cue.is_empty() => format!("Reply to {a} as {}.", me.name),
        Some(a) => format!("Say something to {a} that moves the scene forward, as {}.", me.name),
        None => format!("Say something that moves the scene forward, as {}.", me.name),
    };

    let fits = |story: &[&String], history: &[String]| {
        let ctx = render_context(&head, story, history, &instruction);
        estimate_tokens(&format!("{system_prompt}\n\n{ctx}")) <= budget
    };

    let mut story: Vec<&String> = inputs.story_so_far.iter().collect();
    while !story.is_empty() && !fits(&story, &[]) {
        story.remove(0);
    }
    if !fits(&story, &[]) {
        return Err(DialogueError::BudgetTooSmall(budget));
    }
    let mut history: Vec<String> = Vec::new();
    for line in inputs.history.iter().rev() {
        let rendered = format!("{}: {}", scene.display_name(&line.speaker), line.text);
        history.insert(0, rendered);
        if !fits(&story, &history) {
            history.remove(0);
            break;
        }
    }
    let context_block = render_context(&head, &story, &history, &instruction);
    Ok(GenerationRequest {
        system_prompt,
        context_block,
        token_budget: budget,
        speaker: speaker.clone(),
        addressee: addressee.cloned(),
        speaker_name: me.name.clone(),
        speaker_role,
        addressee_name,
        location: inputs.roles.location.clone(),
        cue: cue.to_owned(),
    })
}

fn render_context(head: &str, story: &[&String], history: &[String], instruction: &str) -> String {
    let mut out = head.to_owned();
    out.push_str("STORY SO FAR: ");
    if story.is_empty() {
        out.push_str("(nothing yet)");
    } else {
        out.push_str(&story.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("; "));
    }
    out.push_str("\nDIALOGUE HISTORY:\n");
    for l in history {
        out.push_str(l);
        out.push('\n');
    }
    out.push_str(instruction);
    out
}

/// Number of history lines that made it into a request.
pub fn history_lines(request: &GenerationRequest) -> Vec<&str> {
    let ctx = &request.context_block;
    let Some(start) = ctx.find("\nDIALOGUE HISTORY:\n") else {
        return Vec::new();
    };
    let body = &ctx[start + "\nDIALOGUE HISTORY:\n".len()..];
    let mut lines: Vec<&str> = body.lines().collect();
    lines.pop();
    lines
}
