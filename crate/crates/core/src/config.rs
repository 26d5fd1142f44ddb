//! Engine configuration. Every key has a default; files may set any subset.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusionWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Deterministic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Queue length that forces a commit.
    #[serde(rename = "N_commit")]
    pub n_commit: usize,
    /// Age of the oldest queued candidate that forces a commit.
    #[serde(rename = "T_commit_ms")]
    pub t_commit_ms: u64,
    pub proactive_ms: u64,
    pub social_cooldown_ms: u64,
    pub movement_threshold_m: f64,
    pub interaction_radius_m: f64,
    pub weights: FusionWeights,
    pub token_budget: usize,
    pub backend: BackendKind,
    /// Nominal session length used to place frames in the three-act arc.
    pub session_length_ms: u64,
    pub dedup_window_ms: u64,
    pub cooccurrence_window_ms: u64,
    pub salience_floor: f64,
    pub trail_capacity: usize,
    pub weight_history: usize,
    pub env_downweight: f64,
    pub social_upweight: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            n_commit: 5,
            t_commit_ms: 1000,
            proactive_ms: 10_000,
            social_cooldown_ms: 5000,
            movement_threshold_m: 0.5,
            interaction_radius_m: 0.5,
            weights: FusionWeights::uniform(),
            token_budget: 1024,
            backend: BackendKind::Deterministic,
            session_length_ms: 600_000,
            dedup_window_ms: 500,
            cooccurrence_window_ms: 1000,
            salience_floor: 0.1,
            trail_capacity: 32,
            weight_history: 10,
            env_downweight: 0.8,
            social_upweight: 1.25,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config value `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

pub const MIN_TOKEN_BUDGET: usize = 512;
pub const MAX_TOKEN_BUDGET: usize = 2048;

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `.json` files as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key, reason: &str| {
            Err(ConfigError::Invalid {
                key,
                reason: reason.to_owned(),
            })
        };
        if self.n_commit == 0 {
            return bad("N_commit", "must be at least 1");
        }
        if self.t_commit_ms == 0 {
            return bad("T_commit_ms", "must be positive");
        }
        if !(MIN_TOKEN_BUDGET..=MAX_TOKEN_BUDGET).contains(&self.token_budget) {
            return bad("token_budget", "must lie in 512..=2048");
        }
        if !(self.movement_threshold_m > 0.0 && self.movement_threshold_m.is_finite()) {
            return bad("movement_threshold_m", "must be positive");
        }
        if !(self.interaction_radius_m > 0.0 && self.interaction_radius_m.is_finite()) {
            return bad("interaction_radius_m", "must be positive");
        }
        if !self.weights.is_valid() {
            return bad("weights", "each weight in [0,1] and summing to 1");
        }
        if self.session_length_ms == 0 {
            return bad("session_length_ms", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.salience_floor) {
            return bad("salience_floor", "must lie in [0,1]");
        }
        if self.trail_capacity == 0 {
            return bad("trail_capacity", "must be at least 1");
        }
        if !(self.env_downweight > 0.0 && self.social_upweight > 0.0) {
            return bad("env_downweight", "multipliers must be positive");
        }
        Ok(())
    }
}
