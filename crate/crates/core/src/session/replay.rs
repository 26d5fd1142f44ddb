use std::path::Path;
use std::sync::Arc;

use super::{save_atomic, Session, SessionError};
use crate::assembly::StoryMarble;
use crate::backend::DeterministicBackend;
use crate::config::Config;
use crate::export::ExportArtifacts;
use crate::fusion::IntentFrame;
use crate::log::{parse_document, SessionDocument, SessionStatus};
use crate::scene::bundled_fixture;

const BUNDLED: &[(&str, &str)] = &[
    (
        "robinhood_workflow",
        include_str!("../../resources/sessions/robinhood_workflow.json"),
    ),
    (
        "robinhood_full",
        include_str!("../../resources/sessions/robinhood_full.json"),
    ),
    (
        "robinhood_export",
        include_str!("../../resources/sessions/robinhood_export.json"),
    ),
];

/// Recorded session logs shipped with the crate.
pub fn session_ids() -> Vec<&'static str> {
    BUNDLED.iter().map(|(id, _)| *id).collect()
}

pub fn bundled_session(id: &str) -> Option<SessionDocument> {
    let (_, json) = BUNDLED.iter().find(|(k, _)| *k == id)?;
    Some(parse_document(json).expect("bundled sessions are valid"))
}

/// Everything a replay produces, in memory.
#[derive(Debug, Clone)]
pub struct ReplayOutputs {
    pub frames: Vec<IntentFrame>,
    pub marbles: Vec<StoryMarble>,
    pub artifacts: ExportArtifacts,
    pub document: SessionDocument,
}

/// Replays a recorded log on its bundled scene with the deterministic backend,
/// ends play at the recorded duration and exports.
pub fn replay_document(doc: &SessionDocument, config: Config) -> Result<ReplayOutputs, SessionError> {
    let fixture = bundled_fixture(&doc.scene_id).ok_or_else(|| SessionError::UnknownFixture(doc.scene_id.clone()))?;
    let backend = Arc::new(DeterministicBackend::new(fixture.script.clone()));
    let mut active = doc.clone();
    active.status = Some(SessionStatus::Active);
    active.timeline = None;
    let mut s = Session::from_document(&active, fixture, config, backend)?;
    s.generate = false;
    s.end_play(doc.metadata.duration_ms)?;
    let artifacts = s.export()?;
    Ok(ReplayOutputs {
        frames: s.frames().to_vec(),
        marbles: s.board().ordered().into_iter().cloned().collect(),
        artifacts,
        document: s.document(),
    })
}

/// [`replay_document`] plus the files: frames.json, marbles.json,
/// synopsis.txt, screenplay.fountain and session.json.
pub fn replay_cli(doc: &SessionDocument, config: Config, out_dir: &Path) -> Result<ReplayOutputs, SessionError> {
    let out = replay_document(doc, config)?;
    let io = |e: std::io::Error| SessionError::Io(format!("{}: {e}", out_dir.display()));
    std::fs::create_dir_all(out_dir).map_err(io)?;
    std::fs::write(out_dir.join("frames.json"), pretty(&out.frames)).map_err(io)?;
    std::fs::write(out_dir.join("marbles.json"), pretty(&out.marbles)).map_err(io)?;
    std::fs::write(out_dir.join("synopsis.txt"), format!("{}\n", out.artifacts.synopsis)).map_err(io)?;
    std::fs::write(out_dir.join("screenplay.fountain"), &out.artifacts.screenplay_text).map_err(io)?;
    save_atomic(&out_dir.join("session.json"), &out.document)?;
    Ok(out)
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}
