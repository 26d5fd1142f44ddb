//! Story marbles and the timeline they are arranged on.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::IntentFrame;
use crate::geometry::Vec3;
use crate::log::{speech_lines, DialogueLine, SessionLog};
use crate::scene::{Attachment, EntityId, SceneState};

/// Edits remembered for undo.
pub const UNDO_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssemblyError {
    #[error("unknown marble `{0}`")]
    UnknownMarble(String),
    #[error("position {position} is outside 0..{len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("frame `{0}` already has a marble")]
    DuplicateFrame(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterPose {
    pub id: EntityId,
    pub position: Vec3,
    pub facing: Vec3,
    pub held_prop: Option<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropPose {
    pub id: EntityId,
    pub position: Vec3,
    pub attached_to: Option<Attachment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSnapshot {
    pub characters: Vec<CharacterPose>,
    pub props: Vec<PropPose>,
    pub environment_label: String,
    /// Speech events in the log at capture.
    pub dialogue_index: usize,
}

impl SceneSnapshot {
    pub fn capture(scene: &SceneState, dialogue_index: usize) -> Self {
        Self {
            characters: scene
                .characters
                .iter()
                .map(|c| CharacterPose {
                    id: c.id.clone(),
                    position: c.position,
                    facing: c.facing,
                    held_prop: c.held_prop.clone(),
                })
                .collect(),
            props: scene
                .props
                .iter()
                .map(|p| PropPose {
                    id: p.id.clone(),
                    position: p.position,
                    attached_to: p.attached_to.clone(),
                })
                .collect(),
            environment_label: scene.environment_label.clone(),
            dialogue_index,
        }
    }

    /// Every attachment is mirrored by its host and vice versa.
    pub fn is_consistent(&self) -> bool {
        let hosts: BTreeMap<&EntityId, &CharacterPose> = self.characters.iter().map(|c| (&c.id, c)).collect();
        let props: BTreeMap<&EntityId, &PropPose> = self.props.iter().map(|p| (&p.id, p)).collect();
        self.props.iter().all(|p| match &p.attached_to {
            Some(a) => hosts
                .get(&a.character)
                .is_some_and(|h| h.held_prop.as_ref() == Some(&p.id)),
            None => true,
        }) && self.characters.iter().all(|c| match &c.held_prop {
            Some(p) => props
                .get(p)
                .and_then(|p| p.attached_to.as_ref())
                .is_some_and(|a| a.character == c.id),
            None => true,
        })
    }

    /// Whether the snapshot matches the live scene pose for pose.
    pub fn matches(&self, scene: &SceneState) -> bool {
        let live = Self::capture(scene, self.dialogue_index);
        live == *self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarbleCard {
    pub summary: String,
    /// Display names.
    pub characters: Vec<String>,
    pub snapshot: SceneSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryMarble {
    pub marble_id: String,
    pub frame_id: String,
    pub card: MarbleCard,
    pub capture_t: u64,
    pub timeline_position: usize,
}

/// Ordered marble ids with bounded undo.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Timeline {
    order: Vec<String>,
    history: VecDeque<Vec<String>>,
}

impl Timeline {
    pub fn from_order(order: Vec<String>) -> Self {
        Self {
            order,
            history: VecDeque::new(),
        }
    }

    pub fn order(&self) -> &[String] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn position_of(&self, marble_id: &str) -> Option<usize> {
        self.order.iter().position(|m| m == marble_id)
    }

    pub fn undo_depth(&self) -> usize {
        self.history.len()
    }

    fn remember(&mut self) {
        if self.history.len() == UNDO_DEPTH {
            self.history.pop_front();
        }
        self.history.push_back(self.order.clone());
    }

    /// Appends without recording an undo step; spawning is not an edit.
    pub fn push(&mut self, marble_id: String) {
        self.order.push(marble_id);
    }

    pub fn reorder(&mut self, marble_id: &str, new_position: usize) -> Result<(), AssemblyError> {
        let from = self
            .position_of(marble_id)
            .ok_or_else(|| AssemblyError::UnknownMarble(marble_id.to_owned()))?;
        if new_position >= self.order.len() {
            return Err(AssemblyError::PositionOutOfRange {
                position: new_position,
                len: self.order.len(),
            });
        }
        if from == new_position {
            return Ok(());
        }
        self.remember();
        let id = self.order.remove(from);
        self.order.insert(new_position, id);
        Ok(())
    }

    pub fn delete(&mut self, marble_id: &str) -> Result<(), AssemblyError> {
        let at = self
            .position_of(marble_id)
            .ok_or_else(|| AssemblyError::UnknownMarble(marble_id.to_owned()))?;
        self.remember();
        self.order.remove(at);
        Ok(())
    }

    pub fn undo(&mut self) -> Result<(), AssemblyError> {
        self.order = self.history.pop_back().ok_or(AssemblyError::NothingToUndo)?;
        Ok(())
    }
}

/// Snapshot plus the dialogue heard up to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub marble_id: String,
    pub snapshot: SceneSnapshot,
    pub dialogue: Vec<DialogueLine>,
}

/// Marbles by id plus the timeline ordering them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoryBoard {
    marbles: BTreeMap<String, StoryMarble>,
    timeline: Timeline,
    spawned: u64,
}

impl StoryBoard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a board from stored marbles and an optional explicit order.
    pub fn restore(marbles: Vec<StoryMarble>, order: Option<Vec<String>>) -> Result<Self, AssemblyError> {
        let spawned = marbles
            .iter()
            .filter_map(|m| m.marble_id.strip_prefix('m')?.parse::<u64>().ok())
            .max()
            .unwrap_or(0)
            .max(marbles.len() as u64);
        let order = order.unwrap_or_else(|| {
            let mut ms: Vec<&StoryMarble> = marbles.iter().collect();
            ms.sort_by_key(|m| m.timeline_position);
            ms.iter().map(|m| m.marble_id.clone()).collect()
        });
        let map: BTreeMap<String, StoryMarble> = marbles.into_iter().map(|m| (m.marble_id.clone(), m)).collect();
        for id in &order {
            if !map.contains_key(id) {
                return Err(AssemblyError::UnknownMarble(id.clone()));
            }
        }
        let mut board = Self {
            marbles: map,
            timeline: Timeline::from_order(order),
            spawned,
        };
        board.marbles.retain(|id, _| board.timeline.position_of(id).is_some());
        board.sync_positions();
        Ok(board)
    }

    /// Creates the marble for a committed frame at the end of the timeline.
    pub fn spawn_marble(
        &mut self,
        frame: &IntentFrame,
        scene: &SceneState,
        log: &SessionLog,
    ) -> Result<&StoryMarble, AssemblyError> {
        if self.marbles.values().any(|m| m.frame_id == frame.frame_id) {
            return Err(AssemblyError::DuplicateFrame(frame.frame_id.clone()));
        }
        self.spawned += 1;
        let marble_id = format!("m{}", self.spawned);
        let dialogue_index = log
            .events()
            .iter()
            .filter(|e| e.kind.is_speech() && e.t <= frame.t_end)
            .count();
        let marble = StoryMarble {
            marble_id: marble_id.clone(),
            frame_id: frame.frame_id.clone(),
            card: MarbleCard {
                summary: frame.summary.clone(),
                characters: frame.characters.iter().map(|c| scene.display_name(c)).collect(),
                snapshot: SceneSnapshot::capture(scene, dialogue_index),
            },
            capture_t: frame.t_end,
            timeline_position: self.timeline.len(),
        };
        self.timeline.push(marble_id.clone());
        Ok(self.marbles.entry(marble_id).or_insert(marble))
    }

    fn sync_positions(&mut self) {
        for (i, id) in self.timeline.order().iter().enumerate() {
            if let Some(m) = self.marbles.get_mut(id) {
                m.timeline_position = i;
            }
        }
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    pub fn len(&self) -> usize {
        self.timeline.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timeline.is_empty()
    }

    pub fn marble(&self, id: &str) -> Option<&StoryMarble> {
        self.marbles.get(id)
    }

    /// Marbles in timeline order.
    pub fn ordered(&self) -> Vec<&StoryMarble> {
        self.timeline
            .order()
            .iter()
            .filter_map(|id| self.marbles.get(id))
            .collect()
    }

    pub fn reorder(&mut self, marble_id: &str, new_position: usize) -> Result<(), AssemblyError> {
        self.timeline.reorder(marble_id, new_position)?;
        self.sync_positions();
        Ok(())
    }

    /// Drops the marble from the timeline. Its data stays so undo can bring it back.
    pub fn delete(&mut self, marble_id: &str) -> Result<(), AssemblyError> {
        self.timeline.delete(marble_id)?;
        self.sync_positions();
        Ok(())
    }

    pub fn undo(&mut self) -> Result<(), AssemblyError> {
        self.timeline.undo()?;
        self.sync_positions();
        Ok(())
    }

    pub fn replay(&self, marble_id: &str, log: &SessionLog) -> Result<Replay, AssemblyError> {
        let m = self
            .timeline
            .position_of(marble_id)
            .and_then(|_| self.marbles.get(marble_id))
            .ok_or_else(|| AssemblyError::UnknownMarble(marble_id.to_owned()))?;
        let gone = log.overridden_ids();
        let heard: Vec<_> = log
            .events()
            .iter()
            .filter(|e| e.kind.is_speech())
            .take(m.card.snapshot.dialogue_index)
            .filter(|e| !gone.contains(&e.event_id))
            .collect();
        Ok(Replay {
            marble_id: m.marble_id.clone(),
            snapshot: m.card.snapshot.clone(),
            dialogue: speech_lines(heard),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{ClassifiedBy, IntentType};
    use crate::log::{EventDraft, EventKind};
    use crate::scene::bundled_fixture;
    use proptest::prelude::*;

    fn frame(id: &str, t_end: u64) -> IntentFrame {
        IntentFrame {
            frame_id: id.into(),
            actions: Vec::new(),
            characters: vec!["robin".into()],
            t_start: t_end.saturating_sub(100),
            t_end,
            tension: 3,
            intent_type: IntentType::RisingAction,
            summary: format!("summary {id}"),
            tone: "neutral".into(),
            function: String::new(),
            source_features: Vec::new(),
            classified_by: ClassifiedBy::Rules,
            log_cursor: 0,
        }
    }

    fn board_of(n: usize) -> StoryBoard {
        let fx = bundled_fixture("robinhood").unwrap();
        let log = SessionLog::new("s", "robinhood", "0");
        let mut b = StoryBoard::new();
        for i in 0..n {
            b.spawn_marble(&frame(&format!("f{i}"), i as u64), &fx.scene, &log)
                .unwrap();
        }
        b
    }

    fn ids(b: &StoryBoard) -> Vec<String> {
        b.timeline().order().to_vec()
    }

    #[test]
    fn spawn_appends_in_order() {
        let b = board_of(2);
        assert_eq!(ids(&b), ["m1", "m2"]);
        assert_eq!(b.marble("m2").unwrap().timeline_position, 1);
        assert_eq!(b.marble("m1").unwrap().card.characters, ["Robin Hood"]);
    }

    #[test]
    fn reorder_rotates() {
        let mut b = board_of(4);
        b.reorder("m4", 0).unwrap();
        assert_eq!(ids(&b), ["m4", "m1", "m2", "m3"]);
        b.reorder("m1", 1).unwrap();
        assert_eq!(ids(&b), ["m4", "m1", "m2", "m3"]);
        assert_eq!(
            b.reorder("m1", 4),
            Err(AssemblyError::PositionOutOfRange { position: 4, len: 4 })
        );
        assert_eq!(b.reorder("m9", 0), Err(AssemblyError::UnknownMarble("m9".into())));
    }

    #[test]
    fn delete_compacts_and_undo_restores() {
        let mut b = board_of(4);
        b.delete("m2").unwrap();
        assert_eq!(ids(&b), ["m1", "m3", "m4"]);
        assert_eq!(b.marble("m4").unwrap().timeline_position, 2);
        assert_eq!(b.delete("m2"), Err(AssemblyError::UnknownMarble("m2".into())));
        b.undo().unwrap();
        assert_eq!(ids(&b), ["m1", "m2", "m3", "m4"]);
        for id in ["m1", "m2", "m3", "m4"] {
            b.delete(id).unwrap();
        }
        assert!(b.is_empty());
        assert_eq!(b.undo_all(), 4);
    }

    impl StoryBoard {
        fn undo_all(&mut self) -> usize {
            let mut n = 0;
            while self.undo().is_ok() {
                n += 1;
            }
            n
        }
    }

    #[test]
    fn undo_depth_is_bounded() {
        let mut b = board_of(3);
        for i in 0..40 {
            b.reorder("m1", (i % 2) + 1).unwrap();
        }
        assert_eq!(b.timeline().undo_depth(), UNDO_DEPTH);
    }

    #[test]
    fn snapshot_and_replay() {
        let fx = bundled_fixture("robinhood").unwrap();
        let mut scene = fx.scene.clone();
        let mut log = SessionLog::new("s", "robinhood", "0");
        log.append_event(EventDraft::speech(
            100,
            EventKind::UserSpeech,
            "mary".into(),
            "Help!",
            None,
        ))
        .unwrap();
        log.append_event(EventDraft::speech(
            200,
            EventKind::AIReactiveSpeech,
            "robin".into(),
            "I will.",
            None,
        ))
        .unwrap();
        log.append_event(EventDraft::speech(
            900,
            EventKind::UserSpeech,
            "mary".into(),
            "Now!",
            None,
        ))
        .unwrap();
        scene
            .move_character(&"robin".into(), Vec3::new(-1.0, 0.0, -1.0), 250)
            .unwrap();
        let mut b = StoryBoard::new();
        b.spawn_marble(&frame("f0", 500), &scene, &log).unwrap();
        let r = b.replay("m1", &log).unwrap();
        assert_eq!(r.snapshot.dialogue_index, 2);
        assert_eq!(
            r.dialogue.iter().map(|l| l.text.as_str()).collect::<Vec<_>>(),
            ["Help!", "I will."]
        );
        assert!(r.snapshot.matches(&scene));
        assert!(r.snapshot.is_consistent());
        assert_eq!(b.replay("m1", &log).unwrap(), r);
        assert!(b.replay("m2", &log).is_err());
    }

    #[test]
    fn restore_round_trip() {
        let mut b = board_of(3);
        b.reorder("m3", 0).unwrap();
        let marbles: Vec<StoryMarble> = b.ordered().into_iter().cloned().collect();
        let r = StoryBoard::restore(marbles, None).unwrap();
        assert_eq!(ids(&r), ["m3", "m1", "m2"]);
        let fx = bundled_fixture("robinhood").unwrap();
        let mut r = r;
        r.spawn_marble(&frame("f9", 9), &fx.scene, &SessionLog::new("s", "x", "0"))
            .unwrap();
        assert_eq!(ids(&r).last().unwrap(), "m4");
    }

    proptest! {
        #[test]
        fn edits_preserve_permutation(ops in proptest::collection::vec((0usize..12, 0usize..12, any::<bool>()), 0..40)) {
            let mut b = board_of(8);
            let mut all: Vec<String> = ids(&b);
            for (a, p, del) in ops {
                let cur = ids(&b);
                if cur.is_empty() { break; }
                let id = cur[a % cur.len()].clone();
                if del && cur.len() > 1 {
                    b.delete(&id).unwrap();
                    all.retain(|x| x != &id);
                } else {
                    let _ = b.reorder(&id, p);
                }
                let mut sorted = ids(&b);
                sorted.sort();
                let mut expect = all.clone();
                expect.sort();
                prop_assert_eq!(sorted, expect);
                for (i, m) in b.ordered().iter().enumerate() {
                    prop_assert_eq!(m.timeline_position, i);
                }
            }
        }
    }
}
