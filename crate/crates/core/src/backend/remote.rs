//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendError, GenerationBackend, GenerationRequest, SynopsisDigest};

pub const ENDPOINT_VAR: &str = "STORYSTAGE_REMOTE_ENDPOINT";
pub const MODEL_VAR: &str = "STORYSTAGE_REMOTE_MODEL";
pub const KEY_VAR: &str = "STORYSTAGE_REMOTE_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn from_env() -> Result<Self, BackendError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        Ok(Self {
            endpoint: var(ENDPOINT_VAR).ok_or_else(|| BackendError::Failure(format!("{ENDPOINT_VAR} is not set")))?,
            model: var(MODEL_VAR).ok_or_else(|| BackendError::Failure(format!("{MODEL_VAR} is not set")))?,
            api_key: var(KEY_VAR),
            timeout: Duration::from_secs(30),
        })
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Failure(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn chat(&self, system: &str, user: &str, max_tokens: usize) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "max_tokens": max_tokens,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Failure(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Failure(format!("HTTP {status}")));
        }
        let v: Value = resp.json().map_err(|e| BackendError::Malformed(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| BackendError::Malformed("no message content".into()))
    }
}

impl GenerationBackend for RemoteBackend {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        self.chat(&request.system_prompt, &request.context_block, 200)
    }

    fn analyze(&self, prompt: &str) -> Result<Vec<String>, BackendError> {
        let text = self.chat("Follow the instructions exactly.", prompt, 300)?;
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect())
    }

    fn compose_synopsis(&self, digest: &SynopsisDigest) -> Result<String, BackendError> {
        let mut prompt = format!(
            "Write a three-paragraph synopsis of the story \"{}\" set in {}. Paragraph one covers the setup, two the development, three the resolution. Quote at least one line of dialogue verbatim in double quotes in every paragraph. Separate paragraphs with a blank line.\n\nBEATS IN ORDER:\n",
            digest.title, digest.location
        );
        for (i, b) in digest.beats.iter().enumerate() {
            prompt.push_str(&format!("{}. {} (tension {})\n", i + 1, b.summary, b.tension));
            for (who, line) in &b.lines {
                prompt.push_str(&format!("   {who}: {line}\n"));
            }
        }
        self.chat("You are a story editor.", &prompt, 700)
    }
}
