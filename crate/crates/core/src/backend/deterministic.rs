use sha2::{Digest, Sha256};

use super::{BackendError, GenerationBackend, GenerationRequest, SynopsisDigest};
use crate::fusion::{is_classification_prompt, parse_prompt_facts, rule_classification};
use crate::scene::DeterministicScript;
use crate::text::classify_emotion;

const DEFAULT_ROLE: &str = "default";
const FALLBACK_REPLIES: &[&str] = &["{addressee}, I hear you."];

/// Template replies keyed by a hash of (role, addressee, cue); rule-based analysis.
#[derive(Debug, Clone, Default)]
pub struct DeterministicBackend {
    script: DeterministicScript,
}

impl DeterministicBackend {
    pub fn new(script: DeterministicScript) -> Self {
        Self { script }
    }

    pub fn script(&self) -> &DeterministicScript {
        &self.script
    }

    fn pick(&self, role: &str, addressee: &str, cue: &str) -> String {
        let table: Vec<&str> = self
            .script
            .reply_templates
            .get(role)
            .or_else(|| self.script.reply_templates.get(DEFAULT_ROLE))
            .map(|v| v.iter().map(String::as_str).collect())
            .filter(|v: &Vec<&str>| !v.is_empty())
            .unwrap_or_else(|| FALLBACK_REPLIES.to_vec());
        let mut h = Sha256::new();
        for part in [role, addressee, cue] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        let digest = h.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        let index = (u64::from_be_bytes(head) % table.len() as u64) as usize;
        table[index].to_owned()
    }
}

fn between<'a>(s: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = s.find(start)? + start.len();
    let rest = &s[from..];
    Some(&rest[..rest.find(end)?])
}

impl GenerationBackend for DeterministicBackend {
    fn name(&self) -> &'static str {
        "deterministic"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let addressee = request.addressee_name.as_deref().unwrap_or("friends");
        let template = self.pick(&request.speaker_role, addressee, &request.cue);
        Ok(template
            .replace("{speaker}", &request.speaker_name)
            .replace("{addressee}", addressee)
            .replace("{location}", &request.location))
    }

    fn analyze(&self, prompt: &str) -> Result<Vec<String>, BackendError> {
        if is_classification_prompt(prompt) {
            let facts = parse_prompt_facts(prompt)
                .ok_or_else(|| BackendError::Malformed("unreadable classification prompt".into()))?;
            let c = rule_classification(
                &facts.dialogue,
                facts.progress,
                facts.previous,
                &self.script.beat_titles,
                &facts.top_description,
            );
            return Ok(vec![
                format!("Summary: {}", c.summary),
                format!("Tone: {}", c.tone),
                format!("Function: {}", c.function),
                format!("TENSION: {}", c.tension),
                format!("INTENT: {}", c.intent_type.as_str()),
            ]);
        }
        if let Some(line) = between(prompt, "LAST LINE: \"", "\"\nPRIOR DIALOGUE:") {
            let emotion = classify_emotion(line).map_or("none", |e| e.as_str());
            return Ok(vec![format!("EMOTION: {emotion}")]);
        }
        Err(BackendError::Unsupported)
    }

    fn compose_synopsis(&self, digest: &SynopsisDigest) -> Result<String, BackendError> {
        crate::export::template_synopsis(digest).ok_or_else(|| BackendError::Failure("empty digest".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::bundled_fixture;

    fn request(cue: &str) -> GenerationRequest {
        GenerationRequest {
            system_prompt: "s".into(),
            context_block: "c".into(),
            token_budget: 1024,
            speaker: "pemberton".into(),
            addressee: Some("robin".into()),
            speaker_name: "Lord Pemberton".into(),
            speaker_role: "nobleman".into(),
            addressee_name: Some("Robin Hood".into()),
            location: "City Hall".into(),
            cue: cue.into(),
        }
    }

    #[test]
    fn replies_are_reproducible_and_expanded() {
        let b = DeterministicBackend::new(bundled_fixture("robinhood").unwrap().script);
        let a = b.generate(&request("You evil man")).unwrap();
        assert_eq!(a, b.generate(&request("You evil man")).unwrap());
        assert!(a.contains("Robin Hood"));
        assert!(!a.contains('{'));
        let distinct: std::collections::BTreeSet<String> = (0..20)
            .map(|i| b.generate(&request(&format!("line {i}"))).unwrap())
            .collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn unknown_role_uses_default_table() {
        let b = DeterministicBackend::default();
        let mut r = request("x");
        r.speaker_role = "wizard".into();
        assert_eq!(b.generate(&r).unwrap(), "Robin Hood, I hear you.");
    }

    #[test]
    fn narrator_analysis() {
        let b = DeterministicBackend::default();
        let lines = b
            .analyze("SPEAKER: Robin\nLAST LINE: \"You evil man, how dare you!\"\nPRIOR DIALOGUE: x")
            .unwrap();
        assert_eq!(lines, ["EMOTION: angry"]);
        assert_eq!(b.analyze("what?"), Err(BackendError::Unsupported));
    }
}
