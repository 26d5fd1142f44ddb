//! Agent prompt templates and `<Placeholder>` substitution.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    IntentFrame,
    Narrator,
    Social,
    Environment,
    DialogueSystem,
}

impl PromptKind {
    pub const ALL: [PromptKind; 5] = [
        PromptKind::IntentFrame,
        PromptKind::Narrator,
        PromptKind::Social,
        PromptKind::Environment,
        PromptKind::DialogueSystem,
    ];

    pub fn template(self) -> &'static str {
        match self {
            PromptKind::IntentFrame => include_str!("../resources/prompts/intent_frame.txt"),
            PromptKind::Narrator => include_str!("../resources/prompts/narrator.txt"),
            PromptKind::Social => include_str!("../resources/prompts/social.txt"),
            PromptKind::Environment => include_str!("../resources/prompts/environment.txt"),
            PromptKind::DialogueSystem => include_str!("../resources/prompts/dialogue_system.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("no value for placeholder <{0}>")]
    Missing(String),
    #[error("value given for unknown placeholder <{0}>")]
    Unknown(String),
}

/// Byte ranges of every `<...>` placeholder, in order.
fn spans(template: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in template.char_indices() {
        match ch {
            '<' => start = Some(i),
            '>' => {
                if let Some(s) = start.take() {
                    if i > s + 1 {
                        out.push((s, i + 1));
                    }
                }
            }
            '\n' => start = None,
            _ => {}
        }
    }
    out
}

/// Placeholder names in order of appearance (repeats included).
pub fn placeholders(template: &str) -> Vec<&str> {
    spans(template)
        .into_iter()
        .map(|(s, e)| &template[s + 1..e - 1])
        .collect()
}

/// Substitutes placeholders. A name given several times fills successive
/// occurrences in order; a name given once fills all of them.
pub fn render(template: &str, vars: &[(&str, String)]) -> Result<String, PromptError> {
    let mut by_name: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (k, v) in vars {
        by_name.entry(k).or_default().push(v.as_str());
    }
    let names = placeholders(template);
    if let Some(k) = by_name.keys().find(|k| !names.contains(k)) {
        return Err(PromptError::Unknown((*k).to_owned()));
    }
    let mut used: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = String::with_capacity(template.len());
    let mut cursor = 0;
    for (s, e) in spans(template) {
        let name = &template[s + 1..e - 1];
        let values = by_name.get(name).ok_or_else(|| PromptError::Missing(name.to_owned()))?;
        let n = used.entry(name).or_default();
        let value = values.get(*n).or(values.last()).expect("non-empty");
        *n += 1;
        out.push_str(&template[cursor..s]);
        out.push_str(value);
        cursor = e;
    }
    out.push_str(&template[cursor..]);
    Ok(out)
}
