//! Text generation behind one interface: a seeded template backend for
//! reproducible runs and an optional HTTP chat backend.

mod deterministic;
#[cfg(feature = "remote")]
mod remote;

pub use deterministic::DeterministicBackend;
#[cfg(feature = "remote")]
pub use remote::{RemoteBackend, RemoteConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BackendKind, Config};
use crate::scene::{DeterministicScript, EntityId};

/// The backend a config asks for. The template backend is seeded from `script`.
pub fn from_config(
    config: &Config,
    script: DeterministicScript,
) -> Result<std::sync::Arc<dyn GenerationBackend>, BackendError> {
    match config.backend {
        BackendKind::Deterministic => Ok(std::sync::Arc::new(DeterministicBackend::new(script))),
        #[cfg(feature = "remote")]
        BackendKind::Remote => Ok(std::sync::Arc::new(RemoteBackend::new(RemoteConfig::from_env()?)?)),
        #[cfg(not(feature = "remote"))]
        BackendKind::Remote => Err(BackendError::Failure("built without the `remote` feature".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend failure: {0}")]
    Failure(String),
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("backend does not handle this prompt")]
    Unsupported,
}

/// One dialogue turn to generate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub context_block: String,
    pub token_budget: usize,
    pub speaker: EntityId,
    pub addressee: Option<EntityId>,
    pub speaker_name: String,
    pub speaker_role: String,
    pub addressee_name: Option<String>,
    pub location: String,
    /// The line being answered, empty for proactive turns.
    pub cue: String,
}

impl GenerationRequest {
    /// Full prompt as sent to a chat model.
    pub fn prompt_text(&self) -> String {
        format!("{}\n\n{}", self.system_prompt, self.context_block)
    }
}

/// Marble material handed to the synopsis writer, in timeline order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynopsisDigest {
    pub title: String,
    pub location: String,
    pub beats: Vec<DigestBeat>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestBeat {
    pub summary: String,
    pub characters: Vec<String>,
    pub tension: u8,
    /// (speaker display name, verbatim line)
    pub lines: Vec<(String, String)>,
}

pub trait GenerationBackend: Send + Sync {
    fn name(&self) -> &'static str;

    /// One line of character dialogue.
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;

    /// Free-form analysis; returns the reply split into non-empty lines.
    fn analyze(&self, prompt: &str) -> Result<Vec<String>, BackendError>;

    /// Three-paragraph synopsis. Paragraphs are separated by blank lines.
    fn compose_synopsis(&self, digest: &SynopsisDigest) -> Result<String, BackendError>;
}

/// Finds `KEY: value` in analysis lines (case-insensitive key, optional "- " bullet).
pub fn field<'a>(lines: &'a [String], key: &str) -> Option<&'a str> {
    lines.iter().find_map(|l| {
        let l = l.trim().trim_start_matches("- ").trim_start();
        let (k, v) = l.split_once(':')?;
        k.trim().eq_ignore_ascii_case(key).then(|| v.trim())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_lookup() {
        let lines: Vec<String> = ["- Summary: x", "TENSION: 7", "intent: Climax"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(field(&lines, "summary"), Some("x"));
        assert_eq!(field(&lines, "TENSION"), Some("7"));
        assert_eq!(field(&lines, "INTENT"), Some("Climax"));
        assert_eq!(field(&lines, "tone"), None);
    }
}
