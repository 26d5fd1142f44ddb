//! One co-authoring session: scene, log, agents, fusion and timeline behind a
//! single owner, driven by client messages on a logical clock.

mod messages;
mod persist;
mod replay;

pub use messages::{
    character_views, prop_views, scene_delta, CharacterView, ClientBody, ClientMessage, PropView, ServerMessage,
};
pub use persist::{load_document, save_atomic};
pub use replay::{bundled_session, replay_cli, replay_document, session_ids, ReplayOutputs};

use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::agents::{EnvironmentAgent, IntentFeature, NarratorAgent, SocialAgent};
use crate::assembly::{AssemblyError, Replay, StoryBoard, StoryMarble};
use crate::backend::GenerationBackend;
use crate::config::Config;
use crate::dialogue::{
    assemble_prompt, choose_proactive_speaker, infer_addressee, DialogueError, PromptInputs, TurnState,
};
use crate::export::{export_all, ExportArtifacts, ExportBundle, ExportError};
use crate::fusion::{classify_frame, ActionDescriptor, ClassifyContext, CommitBatch, FusionEngine, IntentFrame};
use crate::geometry::Vec3;
use crate::log::{
    DocumentError, EventDraft, EventKind, EventPayload, InteractionEvent, LogError, Metadata, SessionDocument,
    SessionLog, SessionStatus,
};
use crate::scene::{bundled_fixture, CharacterState, EntityId, Hand, SceneError, SceneFixture, SceneState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("unknown scene fixture `{0}`")]
    UnknownFixture(String),
    #[error("{op} is not allowed while the session is {status:?}")]
    WrongPhase { op: &'static str, status: SessionStatus },
    #[error("sequence number {seq} does not follow {last}")]
    OutOfOrder { seq: u64, last: u64 },
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("recorded event {event_id} cannot be replayed: {reason}")]
    Unreplayable { event_id: u64, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl SessionError {
    /// Stable code sent to clients.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownFixture(_) => "UnknownFixture",
            SessionError::WrongPhase { .. } => "WrongPhase",
            SessionError::OutOfOrder { .. } => "OutOfOrder",
            SessionError::Dialogue(DialogueError::CharacterNotHeld(_)) => "CharacterNotHeld",
            SessionError::Dialogue(DialogueError::EmptyUtterance) => "EmptyUtterance",
            SessionError::Dialogue(DialogueError::Backend(_)) => "BackendFailure",
            SessionError::Dialogue(_) => "DialogueError",
            SessionError::Scene(_) => "SceneError",
            SessionError::Log(_) => "LogError",
            SessionError::Assembly(AssemblyError::UnknownMarble(_)) => "UnknownMarble",
            SessionError::Assembly(AssemblyError::PositionOutOfRange { .. }) => "PositionOutOfRange",
            SessionError::Assembly(_) => "AssemblyError",
            SessionError::Export(ExportError::EmptyTimeline) => "EmptyTimeline",
            SessionError::Export(ExportError::Backend(_)) => "BackendFailure",
            SessionError::Export(_) => "ExportError",
            SessionError::Document(_) => "SchemaViolation",
            SessionError::Unreplayable { .. } => "Unreplayable",
            SessionError::Io(_) => "Io",
        }
    }
}

/// Counters that do not belong in the log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub backend_failures: u64,
    pub narrator_fallbacks: u64,
    pub classifier_fallbacks: u64,
}

pub struct Session {
    config: Config,
    fixture: SceneFixture,
    scene: SceneState,
    log: SessionLog,
    environment: EnvironmentAgent,
    social: SocialAgent,
    narrator: NarratorAgent,
    fusion: FusionEngine,
    frames: Vec<IntentFrame>,
    board: StoryBoard,
    turn: TurnState,
    status: SessionStatus,
    backend: Arc<dyn GenerationBackend>,
    /// Whether AI lines are generated (live) or only read from the log (replay).
    generate: bool,
    last_seq: Option<u64>,
    now: u64,
    persist_path: Option<PathBuf>,
    stats: SessionStats,
    outbox: Vec<ServerMessage>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("session_id", &self.log.session_id)
            .field("scene_id", &self.log.scene_id)
            .field("status", &self.status)
            .field("events", &self.log.len())
            .field("frames", &self.frames.len())
            .finish()
    }
}

impl Session {
    /// A live session on a bundled fixture with the deterministic backend.
    pub fn create(fixture_id: &str, config: Config) -> Result<Self, SessionError> {
        let fixture = bundled_fixture(fixture_id).ok_or_else(|| SessionError::UnknownFixture(fixture_id.to_owned()))?;
        let backend = crate::backend::from_config(&config, fixture.script.clone()).map_err(DialogueError::from)?;
        Ok(Self::new(
            format!("{fixture_id}-session"),
            "1970-01-01T00:00:00Z",
            fixture,
            config,
            backend,
        ))
    }

    pub fn new(
        session_id: impl Into<String>,
        created_at: impl Into<String>,
        fixture: SceneFixture,
        config: Config,
        backend: Arc<dyn GenerationBackend>,
    ) -> Self {
        let scene = fixture.scene.clone();
        Self {
            environment: EnvironmentAgent::new(&config),
            social: SocialAgent::new(&config),
            narrator: NarratorAgent::new(&scene, &fixture.roles),
            fusion: FusionEngine::new(&config),
            log: SessionLog::new(session_id, fixture.scene.scene_id.clone(), created_at),
            scene,
            fixture,
            config,
            frames: Vec::new(),
            board: StoryBoard::new(),
            turn: TurnState::default(),
            status: SessionStatus::Active,
            backend,
            generate: true,
            last_seq: None,
            now: 0,
            persist_path: None,
            stats: SessionStats::default(),
            outbox: Vec::new(),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.log.session_id
    }

    pub fn rename(&mut self, session_id: &str) {
        self.log.session_id = session_id.to_owned();
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn scene(&self) -> &SceneState {
        &self.scene
    }

    pub fn fixture(&self) -> &SceneFixture {
        &self.fixture
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn frames(&self) -> &[IntentFrame] {
        &self.frames
    }

    pub fn board(&self) -> &StoryBoard {
        &self.board
    }

    pub fn fusion(&self) -> &FusionEngine {
        &self.fusion
    }

    pub fn narrator(&self) -> &NarratorAgent {
        &self.narrator
    }

    pub fn turn(&self) -> &TurnState {
        &self.turn
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn backend(&self) -> &dyn GenerationBackend {
        self.backend.as_ref()
    }

    /// Rewrite the session document at `path` after every change.
    pub fn persist_to(&mut self, path: impl Into<PathBuf>) -> Result<(), SessionError> {
        let path = path.into();
        save_atomic(&path, &self.document())?;
        self.persist_path = Some(path);
        Ok(())
    }

    fn persist(&self) -> Result<(), SessionError> {
        match &self.persist_path {
            Some(p) => save_atomic(p, &self.document()),
            None => Ok(()),
        }
    }

    fn require(&self, op: &'static str, allowed: &[SessionStatus]) -> Result<(), SessionError> {
        if allowed.contains(&self.status) {
            Ok(())
        } else {
            Err(SessionError::WrongPhase {
                op,
                status: self.status,
            })
        }
    }

    fn clock(&mut self, t: u64) -> u64 {
        self.now = self.now.max(t);
        self.now
    }

    // ---- pipeline ----

    fn story_so_far(&self) -> Vec<String> {
        self.frames.iter().map(|f| f.summary.clone()).collect()
    }

    fn observe(&mut self, before: &SceneState, event: &InteractionEvent) -> Vec<IntentFeature> {
        let mut features = self.environment.observe(before, &self.scene, event);
        features.extend(self.social.observe(before, &self.scene, event));
        if event.kind.is_speech() {
            let out = self.narrator.observe(
                &self.log,
                &self.scene,
                &self.fixture.roles,
                event,
                self.backend.as_ref(),
            );
            if out.backend_error.is_some() {
                self.stats.narrator_fallbacks += 1;
            }
            features.extend(out.features);
        }
        features
    }

    /// Appends a draft whose scene change has already been applied, runs the
    /// agents and fusion, and commits any full batch.
    fn record(&mut self, before: SceneState, draft: EventDraft) -> Result<InteractionEvent, SessionError> {
        let event = self.log.append_event(draft)?.clone();
        let features = self.observe(&before, &event);
        for batch in self.fusion.ingest(features, event.t) {
            self.commit(batch);
        }
        if let Some(delta) = scene_delta(&before, &self.scene, event.t) {
            self.outbox.push(delta);
        }
        if let EventPayload::Speech { text, addressee } = &event.payload {
            let overrides = (event.kind == EventKind::UserSpeech)
                .then(|| {
                    self.log
                        .events()
                        .iter()
                        .rev()
                        .skip(1)
                        .find(|p| !matches!(p.kind, EventKind::CharacterGrab | EventKind::CharacterRelease))
                        .filter(|p| p.kind.is_ai() && p.actor == event.actor)
                        .map(|p| p.event_id)
                })
                .flatten();
            self.outbox.push(ServerMessage::SpeechEvent {
                event_id: event.event_id,
                t: event.t,
                kind: event.kind,
                speaker: event.actor.clone(),
                addressee: addressee.clone(),
                text: text.clone(),
                overrides,
            });
        }
        Ok(event)
    }

    fn commit(&mut self, batch: CommitBatch) {
        let previous = self.frames.last().map(|f| f.tension);
        let ctx = ClassifyContext {
            scene: &self.scene,
            roles: &self.fixture.roles,
            log: &self.log,
            beat_titles: &self.fixture.script.beat_titles,
            session_length_ms: self.config.session_length_ms,
            previous_tension: previous,
            backend: self.backend.as_ref(),
        };
        let (c, by) = classify_frame(&batch.candidates, &ctx);
        if by == crate::fusion::ClassifiedBy::Rules {
            self.stats.classifier_fallbacks += 1;
        }
        let actions: Vec<ActionDescriptor> = batch
            .candidates
            .iter()
            .map(|cand| ActionDescriptor::from_candidate(cand, &self.scene))
            .collect();
        let involved: std::collections::BTreeSet<&EntityId> = actions
            .iter()
            .flat_map(|a| std::iter::once(&a.actor).chain(a.target.iter()))
            .collect();
        let characters = self
            .scene
            .characters
            .iter()
            .filter(|ch| involved.contains(&ch.id))
            .map(|ch| ch.id.clone())
            .collect();
        let frame = IntentFrame {
            frame_id: format!("f{}", self.frames.len() + 1),
            characters,
            t_start: batch
                .candidates
                .iter()
                .map(|c| c.first_t)
                .min()
                .unwrap_or(batch.committed_at),
            t_end: batch
                .candidates
                .iter()
                .map(|c| c.last_t)
                .max()
                .unwrap_or(batch.committed_at),
            tension: c.tension,
            intent_type: c.intent_type,
            summary: c.summary,
            tone: c.tone,
            function: c.function,
            source_features: batch
                .candidates
                .iter()
                .flat_map(|c| c.features.iter().map(|f| f.feature_id))
                .collect(),
            classified_by: by,
            log_cursor: self.log.len(),
            actions,
        };
        self.fusion.record_frame(frame.clone());
        let marble = self
            .board
            .spawn_marble(&frame, &self.scene, &self.log)
            .expect("frame ids are unique")
            .clone();
        self.frames.push(frame);
        self.outbox.push(ServerMessage::MarbleSpawned { marble });
    }

    /// Runs commit deadlines and proactive speech due at or before `now`, in time order.
    fn advance_to(&mut self, now: u64) -> Result<(), SessionError> {
        loop {
            let deadline = self.fusion.deadline().filter(|d| *d <= now);
            let proactive = (self.generate && self.status == SessionStatus::Active)
                .then(|| {
                    self.turn
                        .proactive_due(self.config.proactive_ms)
                        .max(self.log.last_t().unwrap_or(0))
                })
                .filter(|p| *p <= now && !self.turn.ai_speaking && self.turn.pending_reply.is_none());
            match (deadline, proactive) {
                (None, None) => return Ok(()),
                (Some(d), p) if p.is_none_or(|p| d <= p) => {
                    if let Some(batch) = self.fusion.poll(d) {
                        self.commit(batch);
                    }
                }
                (_, p) => self.proactive(p.expect("deadline arm covers the rest"))?,
            }
        }
    }

    fn proactive(&mut self, t: u64) -> Result<(), SessionError> {
        self.turn.last_proactive_t = Some(t);
        let history = self.log.canonical_dialogue();
        let Some(speaker) = choose_proactive_speaker(&self.scene, &history) else {
            return Ok(());
        };
        let addressee = infer_addressee(&self.scene, &speaker, "");
        self.speak_ai(EventKind::AIProactiveSpeech, speaker, addressee, "", t)
    }

    /// Generates and records one AI line. Backend failures are counted, not raised.
    fn speak_ai(
        &mut self,
        kind: EventKind,
        speaker: EntityId,
        addressee: Option<EntityId>,
        cue: &str,
        t: u64,
    ) -> Result<(), SessionError> {
        let history = self.log.canonical_dialogue();
        let story = self.story_so_far();
        let request = assemble_prompt(
            &PromptInputs {
                scene: &self.scene,
                roles: &self.fixture.roles,
                history: &history,
                story_so_far: &story,
            },
            &speaker,
            addressee.as_ref(),
            self.config.token_budget,
            cue,
        )?;
        self.turn.ai_speaking = true;
        let reply = self.backend.generate(&request);
        self.turn.ai_speaking = false;
        let text = match reply {
            Ok(text) if !text.trim().is_empty() => text,
            Ok(_) => {
                self.stats.backend_failures += 1;
                tracing::warn!("backend returned an empty line");
                return Ok(());
            }
            Err(err) => {
                self.stats.backend_failures += 1;
                tracing::warn!(%err, "generation failed; no line recorded");
                return Ok(());
            }
        };
        // Replies that arrive while the speaker is held are dropped.
        if self
            .scene
            .character(&speaker)
            .is_some_and(|c| c.state == CharacterState::HeldByUser)
        {
            return Ok(());
        }
        let draft = EventDraft::speech(t, kind, speaker, text.trim(), addressee);
        let before = self.scene.clone();
        apply_to_scene(&mut self.scene, &draft)?;
        self.record(before, draft)?;
        Ok(())
    }

    // ---- operations ----

    fn interact(&mut self, op: &'static str, t: u64) -> Result<u64, SessionError> {
        self.require(op, &[SessionStatus::Active])?;
        let t = self.clock(t);
        self.advance_to(t)?;
        Ok(t)
    }

    fn user_event(&mut self, draft: EventDraft) -> Result<InteractionEvent, SessionError> {
        let before = self.scene.clone();
        apply_to_scene(&mut self.scene, &draft)?;
        let t = draft.t;
        let event = self.record(before, draft)?;
        self.turn.note_input(t);
        Ok(event)
    }

    pub fn grab(&mut self, character: &EntityId, t: u64) -> Result<(), SessionError> {
        let t = self.interact("Grab", t)?;
        let mut probe = self.scene.clone();
        let draft = probe.grab_character(character, t)?;
        self.user_event(draft)?;
        Ok(())
    }

    pub fn release(&mut self, character: &EntityId, t: u64) -> Result<(), SessionError> {
        let t = self.interact("Release", t)?;
        let draft = self.scene.clone().release_character(character, t)?;
        self.user_event(draft)?;
        Ok(())
    }

    pub fn move_character(&mut self, character: &EntityId, to: Vec3, t: u64) -> Result<(), SessionError> {
        let t = self.interact("Move", t)?;
        let draft = self.scene.clone().move_character(character, to, t)?;
        self.user_event(draft)?;
        Ok(())
    }

    pub fn attach(&mut self, prop: &EntityId, character: &EntityId, hand: Hand, t: u64) -> Result<(), SessionError> {
        let t = self.interact("Attach", t)?;
        let draft = self.scene.clone().attach_prop(prop, character, hand, t)?;
        self.user_event(draft)?;
        Ok(())
    }

    /// The author voices the held character; the addressee answers in the same turn.
    pub fn speak(&mut self, character: &EntityId, text: &str, t: u64) -> Result<(), SessionError> {
        self.require("Speak", &[SessionStatus::Active])?;
        let held = self
            .scene
            .character(character)
            .ok_or_else(|| SceneError::UnknownCharacter(character.clone()))?;
        if held.state != CharacterState::HeldByUser {
            return Err(DialogueError::CharacterNotHeld(character.clone()).into());
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(DialogueError::EmptyUtterance.into());
        }
        let t = self.interact("Speak", t)?;
        let addressee = infer_addressee(&self.scene, character, text);
        let draft = EventDraft::speech(t, EventKind::UserSpeech, character.clone(), text, addressee.clone());
        self.user_event(draft)?;
        if let Some(a) = addressee {
            let free = self
                .scene
                .character(&a)
                .is_some_and(|c| c.state != CharacterState::HeldByUser);
            if free && self.generate {
                self.speak_ai(EventKind::AIReactiveSpeech, a, Some(character.clone()), text, t)?;
            }
        }
        Ok(())
    }

    /// Advances the clock with no input.
    pub fn tick(&mut self, now: u64) -> Result<(), SessionError> {
        let now = self.clock(now);
        if self.status == SessionStatus::Active {
            self.advance_to(now)?;
        }
        Ok(())
    }

    /// Advances the clock from a server timer and returns what it produced.
    pub fn pulse(&mut self, now: u64) -> Result<Vec<ServerMessage>, SessionError> {
        self.outbox.clear();
        self.tick(now)?;
        let out = std::mem::take(&mut self.outbox);
        if !out.is_empty() {
            self.persist()?;
        }
        Ok(out)
    }

    fn timeline_state(&self) -> ServerMessage {
        ServerMessage::TimelineState {
            status: self.status,
            order: self.board.timeline().order().to_vec(),
            marbles: self.board.ordered().into_iter().cloned().collect(),
        }
    }

    /// Ends play: commits whatever is queued and opens assembly.
    pub fn end_play(&mut self, t: u64) -> Result<(), SessionError> {
        let t = self.interact("EndPlay", t)?;
        if let Some(batch) = self.fusion.flush(t) {
            self.commit(batch);
        }
        self.status = SessionStatus::Assembling;
        self.outbox.push(self.timeline_state());
        Ok(())
    }

    const ASSEMBLY: [SessionStatus; 2] = [SessionStatus::Assembling, SessionStatus::Exported];

    pub fn reorder(&mut self, marble_id: &str, position: usize) -> Result<(), SessionError> {
        self.require("Reorder", &Self::ASSEMBLY)?;
        self.board.reorder(marble_id, position)?;
        self.outbox.push(self.timeline_state());
        Ok(())
    }

    pub fn delete_marble(&mut self, marble_id: &str) -> Result<(), SessionError> {
        self.require("Delete", &Self::ASSEMBLY)?;
        self.board.delete(marble_id)?;
        self.outbox.push(self.timeline_state());
        Ok(())
    }

    pub fn undo(&mut self) -> Result<(), SessionError> {
        self.require("Undo", &Self::ASSEMBLY)?;
        self.board.undo()?;
        self.outbox.push(self.timeline_state());
        Ok(())
    }

    pub fn replay_marble(&self, marble_id: &str) -> Result<Replay, SessionError> {
        self.require("ReplayMarble", &Self::ASSEMBLY)?;
        Ok(self.board.replay(marble_id, &self.log)?)
    }

    pub fn export_bundle(&self) -> Result<ExportBundle, SessionError> {
        Ok(ExportBundle::new(
            &self.fixture.title,
            &self.scene,
            &self.fixture.roles,
            &self.fixture.preamble,
            self.board.ordered().into_iter().cloned().collect(),
            &self.frames,
            self.log.canonical_dialogue(),
            self.metadata(Some(self.now)),
        )?)
    }

    pub fn export(&mut self) -> Result<ExportArtifacts, SessionError> {
        self.require("Export", &Self::ASSEMBLY)?;
        let artifacts = export_all(&self.export_bundle()?, self.backend.as_ref())?;
        self.status = SessionStatus::Exported;
        Ok(artifacts)
    }

    pub fn close(&mut self) -> Result<(), SessionError> {
        self.require(
            "Close",
            &[
                SessionStatus::Active,
                SessionStatus::Assembling,
                SessionStatus::Exported,
            ],
        )?;
        self.status = SessionStatus::Closed;
        Ok(())
    }

    // ---- messages ----

    /// Applies one client message. The reply always ends with an Ack or an Error.
    pub fn ingest(&mut self, msg: ClientMessage, server_now: u64) -> Vec<ServerMessage> {
        if let Some(last) = self.last_seq {
            if msg.seq <= last {
                let err = SessionError::OutOfOrder { seq: msg.seq, last };
                return vec![error_message(Some(msg.seq), &err)];
            }
        }
        self.last_seq = Some(msg.seq);
        self.outbox.clear();
        let t = msg.t.unwrap_or(server_now);
        let result = self.apply(msg.body, t);
        let mut out = std::mem::take(&mut self.outbox);
        match result.and_then(|extra| {
            self.persist()?;
            Ok(extra)
        }) {
            Ok(extra) => {
                out.extend(extra);
                out.push(ServerMessage::Ack { seq: msg.seq });
            }
            Err(err) => out.push(error_message(Some(msg.seq), &err)),
        }
        out
    }

    fn apply(&mut self, body: ClientBody, t: u64) -> Result<Vec<ServerMessage>, SessionError> {
        match body {
            ClientBody::Grab { character } => self.grab(&character, t)?,
            ClientBody::Release { character } => self.release(&character, t)?,
            ClientBody::Move { character, to } => self.move_character(&character, to, t)?,
            ClientBody::Attach { prop, character, hand } => self.attach(&prop, &character, hand, t)?,
            ClientBody::Speak { character, text } => self.speak(&character, &text, t)?,
            ClientBody::Tick => self.tick(t)?,
            ClientBody::EndPlay => self.end_play(t)?,
            ClientBody::Reorder { marble_id, position } => self.reorder(&marble_id, position)?,
            ClientBody::Delete { marble_id } => self.delete_marble(&marble_id)?,
            ClientBody::Undo => self.undo()?,
            ClientBody::Export { .. } => {
                let a = self.export()?;
                return Ok(vec![
                    ServerMessage::ExportResult {
                        synopsis: a.synopsis,
                        screenplay_text: a.screenplay_text,
                        screenplay: a.screenplay,
                        continuity: a.continuity.iter().map(ToString::to_string).collect(),
                        warnings: a.continuity,
                    },
                    self.timeline_state(),
                ]);
            }
            ClientBody::ReplayMarble { marble_id } => {
                return Ok(vec![ServerMessage::MarbleReplay {
                    replay: self.replay_marble(&marble_id)?,
                }]);
            }
            ClientBody::Close => self.close()?,
        }
        Ok(Vec::new())
    }

    // ---- documents ----

    pub fn metadata(&self, export_time_ms: Option<u64>) -> Metadata {
        Metadata {
            duration_ms: self.now.max(self.log.last_t().unwrap_or(0)),
            export_time_ms,
            interaction_counts: self.log.counts().clone(),
        }
    }

    /// The log plus frames, marbles, timeline and status.
    pub fn document(&self) -> SessionDocument {
        let mut doc = SessionDocument::from_log(&self.log, self.now, None);
        doc.intent_frames = Some(self.frames.clone());
        doc.marbles = Some(self.board.ordered().into_iter().cloned().collect::<Vec<StoryMarble>>());
        doc.timeline = Some(self.board.timeline().order().to_vec());
        doc.status = Some(self.status);
        doc
    }

    /// Rebuilds a session by replaying a document's log through the pipeline.
    /// Recorded AI lines are reused, never regenerated.
    pub fn from_document(
        doc: &SessionDocument,
        fixture: SceneFixture,
        config: Config,
        backend: Arc<dyn GenerationBackend>,
    ) -> Result<Self, SessionError> {
        let mut s = Self::new(doc.session_id.clone(), doc.created_at.clone(), fixture, config, backend);
        s.generate = false;
        for e in &doc.events {
            s.replay_event(e)?;
        }
        s.clock(doc.metadata.duration_ms);
        let ended = !matches!(doc.status, Some(SessionStatus::Active));
        if ended {
            s.advance_to(s.now)?;
            if let Some(batch) = s.fusion.flush(s.now) {
                s.commit(batch);
            }
            s.status = doc.status.unwrap_or(SessionStatus::Assembling);
            // Keep the author's arrangement when it names marbles the replay rebuilt.
            if let Some(order) = &doc.timeline {
                let rebuilt: Vec<StoryMarble> = s.board.ordered().into_iter().cloned().collect();
                if order.iter().all(|id| rebuilt.iter().any(|m| &m.marble_id == id)) {
                    s.board = StoryBoard::restore(rebuilt, Some(order.clone()))?;
                }
            }
        } else {
            s.advance_to(s.now)?;
        }
        s.generate = doc.status.is_none_or(|st| st == SessionStatus::Active);
        s.outbox.clear();
        Ok(s)
    }

    fn replay_event(&mut self, e: &InteractionEvent) -> Result<(), SessionError> {
        let t = self.clock(e.t);
        self.advance_to(t)?;
        let draft = e.draft();
        let before = self.scene.clone();
        apply_to_scene(&mut self.scene, &draft).map_err(|err| SessionError::Unreplayable {
            event_id: e.event_id,
            reason: err.to_string(),
        })?;
        let rec = self.log.append_with_id(e.event_id, draft)?.clone();
        let features = self.observe(&before, &rec);
        for batch in self.fusion.ingest(features, rec.t) {
            self.commit(batch);
        }
        if rec.kind.is_user_input() {
            self.turn.note_input(rec.t);
        } else if rec.kind == EventKind::AIProactiveSpeech {
            self.turn.last_proactive_t = Some(rec.t);
        }
        Ok(())
    }
}

fn error_message(seq: Option<u64>, err: &SessionError) -> ServerMessage {
    ServerMessage::Error {
        seq,
        code: err.code().to_owned(),
        message: err.to_string(),
    }
}

/// Applies a logged event's scene change. AI replies turn toward whoever they answer.
pub fn apply_to_scene(scene: &mut SceneState, draft: &EventDraft) -> Result<(), SceneError> {
    match (&draft.kind, &draft.payload) {
        (EventKind::CharacterGrab, _) => scene.grab_character(&draft.actor, draft.t).map(drop),
        (EventKind::CharacterRelease, _) => scene.release_character(&draft.actor, draft.t).map(drop),
        (EventKind::CharacterMovement, EventPayload::Movement { to, .. }) => {
            scene.move_character(&draft.actor, *to, draft.t).map(drop)
        }
        (EventKind::CharacterObjectGrab, EventPayload::ObjectGrab { prop, hand }) => {
            scene.attach_prop(prop, &draft.actor, *hand, draft.t).map(drop)
        }
        (EventKind::AIReactiveSpeech, EventPayload::Speech { addressee: Some(a), .. }) => {
            if scene.character(&draft.actor).is_none() {
                return Err(SceneError::UnknownCharacter(draft.actor.clone()));
            }
            scene.face_toward(&draft.actor, a, draft.t)
        }
        (k, _) if k.is_speech() => {
            if scene.character(&draft.actor).is_none() {
                return Err(SceneError::UnknownCharacter(draft.actor.clone()));
            }
            Ok(())
        }
        (k, _) => Err(SceneError::Invalid(format!("payload does not fit {}", k.as_str()))),
    }
}
