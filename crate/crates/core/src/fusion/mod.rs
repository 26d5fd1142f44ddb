//! Turns the agents' feature stream into scored candidates, queues them and
//! commits batches as intent frames.

mod classify;

pub use classify::frame_dialogue;
pub use classify::{
    classification_prompt, classify_frame, intent_rule, parse_classification, rule_classification, Classification,
    ClassifyContext,
};
pub(crate) use classify::{is_classification_prompt, parse_prompt_facts};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentKind, IntentFeature, Label, Salience};
use crate::config::Config;
use crate::scene::{EntityId, SceneState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionWeights {
    pub w_e: f64,
    pub w_s: f64,
    pub w_n: f64,
}

impl FusionWeights {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn uniform() -> Self {
        Self {
            w_e: 1.0 / 3.0,
            w_s: 1.0 / 3.0,
            w_n: 1.0 / 3.0,
        }
    }

    /// Normalized weights, or `None` when any is negative or non-finite or all are zero.
    pub fn new(w_e: f64, w_s: f64, w_n: f64) -> Option<Self> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !(ok(w_e) && ok(w_s) && ok(w_n)) || w_e + w_s + w_n <= 0.0 {
            return None;
        }
        Some(Self { w_e, w_s, w_n }.normalized())
    }

    pub fn is_valid(&self) -> bool {
        let unit = |w: f64| (0.0..=1.0).contains(&w);
        unit(self.w_e)
            && unit(self.w_s)
            && unit(self.w_n)
            && (self.w_e + self.w_s + self.w_n - 1.0).abs() <= Self::SUM_TOLERANCE
    }

    pub fn normalized(self) -> Self {
        let sum = self.w_e + self.w_s + self.w_n;
        Self {
            w_e: self.w_e / sum,
            w_s: self.w_s / sum,
            w_n: self.w_n / sum,
        }
    }

    pub fn score(&self, e: f64, s: f64, n: f64) -> f64 {
        self.w_e * e + self.w_s * s + self.w_n * n
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self::uniform()
    }
}

/// Drops repeats of an actor+label inside the dedup window and features below the floor.
#[derive(Debug, Clone)]
pub struct TemporalFilter {
    window_ms: u64,
    floor: f64,
    last_kept: BTreeMap<(EntityId, Label), u64>,
}

impl TemporalFilter {
    pub fn new(window_ms: u64, floor: f64) -> Self {
        Self {
            window_ms,
            floor,
            last_kept: BTreeMap::new(),
        }
    }

    pub fn admit(&mut self, f: &IntentFeature) -> bool {
        if f.salience.value() < self.floor {
            return false;
        }
        let key = (f.actor.clone(), f.semantic_label);
        if let Some(&prev) = self.last_kept.get(&key) {
            if f.t.saturating_sub(prev) < self.window_ms {
                return false;
            }
        }
        self.last_kept.insert(key, f.t);
        true
    }
}

/// Batch form of [`TemporalFilter`] over time-ordered features.
pub fn temporal_filter(features: &[IntentFeature], window_ms: u64, floor: f64) -> Vec<IntentFeature> {
    let mut filter = TemporalFilter::new(window_ms, floor);
    features.iter().filter(|f| filter.admit(f)).cloned().collect()
}

fn pair(a: &EntityId, b: &EntityId) -> (EntityId, EntityId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// A group of co-occurring features with its component scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub features: Vec<IntentFeature>,
    pub e: f64,
    pub s: f64,
    pub n: f64,
    pub r: f64,
    pub first_t: u64,
    pub last_t: u64,
}

impl RankedCandidate {
    pub fn from_feature(f: IntentFeature, weights: &FusionWeights) -> Self {
        let mut c = Self {
            e: 0.0,
            s: 0.0,
            n: 0.0,
            r: 0.0,
            first_t: f.t,
            last_t: f.t,
            features: vec![f],
        };
        c.recompute(weights);
        c
    }

    /// Builds a candidate directly from component scores (no member features).
    pub fn from_scores(e: f64, s: f64, n: f64, t: u64, weights: &FusionWeights) -> Self {
        Self {
            features: Vec::new(),
            e,
            s,
            n,
            r: weights.score(e, s, n),
            first_t: t,
            last_t: t,
        }
    }

    pub fn actors(&self) -> BTreeSet<&EntityId> {
        self.features.iter().map(|f| &f.actor).collect()
    }

    /// Same actor, or the same unordered actor/target pair, inside the window.
    pub fn accepts(&self, f: &IntentFeature, window_ms: u64) -> bool {
        if f.t < self.first_t || f.t - self.first_t > window_ms {
            return false;
        }
        self.features.iter().any(|m| {
            m.actor == f.actor
                || matches!((&m.target, &f.target), (Some(mt), Some(ft)) if pair(&m.actor, mt) == pair(&f.actor, ft))
        })
    }

    pub fn absorb(&mut self, f: IntentFeature, weights: &FusionWeights) {
        self.features.push(f);
        self.recompute(weights);
    }

    pub fn recompute(&mut self, weights: &FusionWeights) {
        let (mut e, mut s, mut n) = (0.0f64, 0.0f64, 0.0f64);
        for f in &self.features {
            match f.salience {
                Salience::E(v) => e = e.max(v),
                Salience::S(v) => s = s.max(v),
                Salience::N(v) => n = n.max(v),
            }
        }
        if !self.features.is_empty() {
            (self.e, self.s, self.n) = (e, s, n);
            self.first_t = self.features.iter().map(|f| f.t).min().unwrap_or(self.first_t);
            self.last_t = self.features.iter().map(|f| f.t).max().unwrap_or(self.last_t);
        }
        self.r = weights.score(self.e, self.s, self.n);
    }

    fn best(&self, agent: AgentKind) -> Option<&IntentFeature> {
        self.features
            .iter()
            .filter(|f| f.agent == agent)
            .fold(None, |best: Option<&IntentFeature>, f| match best {
                Some(b) if b.salience.value() >= f.salience.value() => Some(b),
                _ => Some(f),
            })
    }

    /// The feature whose clause leads the description.
    pub fn primary(&self) -> Option<&IntentFeature> {
        self.best(AgentKind::Environment)
            .or_else(|| self.best(AgentKind::Narrator))
            .or_else(|| self.best(AgentKind::Social))
    }

    /// "<Actor> <clause> with <qualifier>", e.g. "Robin Hood moves toward Lord Pemberton with anger".
    pub fn description(&self, scene: &SceneState) -> String {
        let Some(p) = self.primary() else {
            return String::new();
        };
        let qualifier = self
            .features
            .iter()
            .filter(|f| f.agent == AgentKind::Narrator && !std::ptr::eq(*f, p))
            .find_map(|f| f.tone.clone())
            .or_else(|| {
                self.best(AgentKind::Social)
                    .filter(|f| !std::ptr::eq(*f, p))
                    .and_then(|f| f.semantic_label.social_noun())
                    .map(str::to_owned)
            });
        let head = format!("{} {}", scene.display_name(&p.actor), p.clause);
        match qualifier {
            Some(q) => format!("{head} with {q}"),
            None => head,
        }
    }
}

/// Groups time-ordered features into candidates with the incremental merge rule.
pub fn fuse(features: &[IntentFeature], window_ms: u64, weights: &FusionWeights) -> Vec<RankedCandidate> {
    let mut out: Vec<RankedCandidate> = Vec::new();
    for f in features {
        match out.iter_mut().find(|c| c.accepts(f, window_ms)) {
            Some(c) => c.absorb(f.clone(), weights),
            None => out.push(RankedCandidate::from_feature(f.clone(), weights)),
        }
    }
    out
}

pub fn score(candidate: &RankedCandidate, weights: &FusionWeights) -> f64 {
    weights.score(candidate.e, candidate.s, candidate.n)
}

#[derive(Debug, Clone, PartialEq)]
struct Queued {
    seq: u64,
    enqueued_at: u64,
    candidate: RankedCandidate,
}

/// Bounded priority queue with count- and age-triggered commits.
#[derive(Debug, Clone)]
pub struct CommitQueue {
    capacity: usize,
    timeout_ms: u64,
    next_seq: u64,
    entries: Vec<Queued>,
}

impl CommitQueue {
    pub fn new(capacity: usize, timeout_ms: u64) -> Self {
        Self {
            capacity: capacity.max(1),
            timeout_ms,
            next_seq: 0,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Time at which the oldest entry forces a commit.
    pub fn deadline(&self) -> Option<u64> {
        self.entries
            .iter()
            .map(|q| q.enqueued_at)
            .min()
            .map(|t| t + self.timeout_ms)
    }

    pub fn candidates(&self) -> impl Iterator<Item = &RankedCandidate> {
        self.entries.iter().map(|q| &q.candidate)
    }

    pub(crate) fn candidates_mut(&mut self) -> impl Iterator<Item = &mut RankedCandidate> {
        self.entries.iter_mut().map(|q| &mut q.candidate)
    }

    /// Adds a candidate; returns the drained batch when the queue fills.
    pub fn enqueue(&mut self, candidate: RankedCandidate, now: u64) -> Option<Vec<RankedCandidate>> {
        self.entries.push(Queued {
            seq: self.next_seq,
            enqueued_at: now,
            candidate,
        });
        self.next_seq += 1;
        (self.entries.len() >= self.capacity).then(|| self.drain())
    }

    /// Commits when the oldest entry has waited at least the timeout.
    pub fn poll(&mut self, now: u64) -> Option<Vec<RankedCandidate>> {
        match self.deadline() {
            Some(d) if now >= d => Some(self.drain()),
            _ => None,
        }
    }

    /// Commits whatever is queued.
    pub fn flush(&mut self) -> Option<Vec<RankedCandidate>> {
        (!self.entries.is_empty()).then(|| self.drain())
    }

    /// Highest R first, FIFO among equals.
    fn drain(&mut self) -> Vec<RankedCandidate> {
        let mut all = std::mem::take(&mut self.entries);
        all.sort_by(|a, b| b.candidate.r.total_cmp(&a.candidate.r).then(a.seq.cmp(&b.seq)));
        all.into_iter().map(|q| q.candidate).collect()
    }
}

/// One ranked action of a committed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDescriptor {
    pub actor: EntityId,
    pub target: Option<EntityId>,
    /// Every entity targeted by a member feature, first seen first.
    #[serde(default)]
    pub objects: Vec<EntityId>,
    pub labels: Vec<Label>,
    pub description: String,
    pub e: f64,
    pub s: f64,
    pub n: f64,
    pub r: f64,
    pub t_first: u64,
    pub t_last: u64,
    pub feature_ids: Vec<u64>,
    /// Contains a social feature for a pair never seen before.
    pub first_time_social: bool,
}

impl ActionDescriptor {
    pub fn from_candidate(c: &RankedCandidate, scene: &SceneState) -> Self {
        let primary = c.primary();
        let mut labels: Vec<Label> = Vec::new();
        let mut objects: Vec<EntityId> = Vec::new();
        for f in &c.features {
            if !labels.contains(&f.semantic_label) {
                labels.push(f.semantic_label);
            }
            if let Some(t) = &f.target {
                if !objects.contains(t) {
                    objects.push(t.clone());
                }
            }
        }
        Self {
            actor: primary.map(|p| p.actor.clone()).unwrap_or_else(|| EntityId::new("")),
            target: primary.and_then(|p| p.target.clone()),
            objects,
            labels,
            description: c.description(scene),
            e: c.e,
            s: c.s,
            n: c.n,
            r: c.r,
            t_first: c.first_t,
            t_last: c.last_t,
            feature_ids: c.features.iter().map(|f| f.feature_id).collect(),
            first_time_social: c.features.iter().any(|f| f.agent == AgentKind::Social && f.first_time),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntentType {
    IncitingIncident,
    RisingAction,
    Climax,
    FallingAction,
    Resolution,
}

impl IntentType {
    pub const ALL: [IntentType; 5] = [
        IntentType::IncitingIncident,
        IntentType::RisingAction,
        IntentType::Climax,
        IntentType::FallingAction,
        IntentType::Resolution,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntentType::IncitingIncident => "IncitingIncident",
            IntentType::RisingAction => "RisingAction",
            IntentType::Climax => "Climax",
            IntentType::FallingAction => "FallingAction",
            IntentType::Resolution => "Resolution",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        Self::ALL.into_iter().find(|t| t.as_str().to_lowercase() == key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifiedBy {
    Backend,
    Rules,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentFrame {
    pub frame_id: String,
    pub actions: Vec<ActionDescriptor>,
    pub characters: Vec<EntityId>,
    pub t_start: u64,
    pub t_end: u64,
    pub tension: u8,
    pub intent_type: IntentType,
    pub summary: String,
    pub tone: String,
    pub function: String,
    pub source_features: Vec<u64>,
    pub classified_by: ClassifiedBy,
    /// Log length when the frame was committed.
    pub log_cursor: usize,
}

impl IntentFrame {
    pub fn is_well_formed(&self) -> bool {
        (1..=10).contains(&self.tension) && !self.actions.is_empty() && self.t_start <= self.t_end
    }

    /// Summed E exceeds both summed S and summed N.
    pub fn environment_dominant(&self) -> bool {
        let (e, s, n) = self
            .actions
            .iter()
            .fold((0.0, 0.0, 0.0), |(e, s, n), a| (e + a.e, s + a.s, n + a.n));
        e > s && e > n
    }

    pub fn has_first_time_social(&self) -> bool {
        self.actions.iter().any(|a| a.first_time_social)
    }

    /// Speech event ids behind this frame's narrator and address features.
    pub fn source_events(&self, features: &BTreeMap<u64, IntentFeature>) -> BTreeSet<u64> {
        self.source_features
            .iter()
            .filter_map(|id| features.get(id))
            .map(|f| f.source_event)
            .collect()
    }
}

/// Multipliers and history length for [`adjust_weights`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPolicy {
    pub history: usize,
    pub env_downweight: f64,
    pub social_upweight: f64,
}

impl WeightPolicy {
    pub fn from_config(c: &Config) -> Self {
        Self {
            history: c.weight_history,
            env_downweight: c.env_downweight,
            social_upweight: c.social_upweight,
        }
    }
}

impl Default for WeightPolicy {
    fn default() -> Self {
        Self::from_config(&Config::default())
    }
}

/// Rebalances after a commit. `frames` is the committed history, newest last.
pub fn adjust_weights(weights: FusionWeights, frames: &[IntentFrame], policy: &WeightPolicy) -> FusionWeights {
    if frames.is_empty() || policy.history == 0 {
        return weights;
    }
    let recent = &frames[frames.len().saturating_sub(policy.history)..];
    let dominant = recent.iter().filter(|f| f.environment_dominant()).count();
    let mut w = weights;
    let mut changed = false;
    if 2 * dominant > recent.len() {
        w.w_e *= policy.env_downweight;
        changed = true;
    }
    if recent.last().is_some_and(IntentFrame::has_first_time_social) {
        w.w_s *= policy.social_upweight;
        changed = true;
    }
    if changed && w.w_e + w.w_s + w.w_n > 0.0 {
        w.normalized()
    } else {
        weights
    }
}

/// A drained batch waiting to become a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitBatch {
    pub candidates: Vec<RankedCandidate>,
    pub committed_at: u64,
}

/// Filter, merge and queue state for one session.
#[derive(Debug, Clone)]
pub struct FusionEngine {
    filter: TemporalFilter,
    window_ms: u64,
    queue: CommitQueue,
    weights: FusionWeights,
    policy: WeightPolicy,
    next_feature_id: u64,
    frames: VecDeque<IntentFrame>,
    features: BTreeMap<u64, IntentFeature>,
}

impl FusionEngine {
    pub fn new(config: &Config) -> Self {
        Self {
            filter: TemporalFilter::new(config.dedup_window_ms, config.salience_floor),
            window_ms: config.cooccurrence_window_ms,
            queue: CommitQueue::new(config.n_commit, config.t_commit_ms),
            weights: config.weights,
            policy: WeightPolicy::from_config(config),
            next_feature_id: 0,
            frames: VecDeque::new(),
            features: BTreeMap::new(),
        }
    }

    pub fn weights(&self) -> FusionWeights {
        self.weights
    }

    pub fn queue(&self) -> &CommitQueue {
        &self.queue
    }

    pub fn deadline(&self) -> Option<u64> {
        self.queue.deadline()
    }

    /// Every feature that passed the filter, by id.
    pub fn features(&self) -> &BTreeMap<u64, IntentFeature> {
        &self.features
    }

    /// Assigns ids, filters, merges or enqueues. Returns batches committed by a full queue.
    pub fn ingest(&mut self, features: Vec<IntentFeature>, now: u64) -> Vec<CommitBatch> {
        let mut out = Vec::new();
        for mut f in features {
            f.feature_id = self.next_feature_id;
            self.next_feature_id += 1;
            if !self.filter.admit(&f) {
                continue;
            }
            self.features.insert(f.feature_id, f.clone());
            let weights = self.weights;
            let window = self.window_ms;
            if let Some(c) = self.queue.candidates_mut().find(|c| c.accepts(&f, window)) {
                c.absorb(f, &weights);
                continue;
            }
            if let Some(candidates) = self.queue.enqueue(RankedCandidate::from_feature(f, &weights), now) {
                out.push(CommitBatch {
                    candidates,
                    committed_at: now,
                });
            }
        }
        out
    }

    pub fn poll(&mut self, now: u64) -> Option<CommitBatch> {
        self.queue.poll(now).map(|candidates| CommitBatch {
            candidates,
            committed_at: now,
        })
    }

    pub fn flush(&mut self, now: u64) -> Option<CommitBatch> {
        self.queue.flush().map(|candidates| CommitBatch {
            candidates,
            committed_at: now,
        })
    }

    /// Records a committed frame and rebalances the weights.
    pub fn record_frame(&mut self, frame: IntentFrame) {
        self.frames.push_back(frame);
        while self.frames.len() > self.policy.history.max(1) {
            self.frames.pop_front();
        }
        let history: Vec<IntentFrame> = self.frames.iter().cloned().collect();
        self.weights = adjust_weights(self.weights, &history, &self.policy);
    }
}
