use std::collections::BTreeMap;

use super::{confidence_of, feature, IntentFeature, Label, Salience, INFERRED_SPATIAL_CONFIDENCE};
use crate::config::Config;
use crate::log::{EventKind, EventPayload, InteractionEvent};
use crate::scene::{EntityId, SceneState};

/// Novelty of a first or rested interaction.
pub const NOVEL_SALIENCE: f64 = 1.0;
/// Novelty of a pair that interacted inside the cool-down.
pub const REPEAT_SALIENCE: f64 = 0.2;
/// Distance inside which moving apart counts as a withdrawal.
pub const WITHDRAWAL_RANGE_M: f64 = 1.0;

/// Id standing in for the human author in takeover pairs.
pub const USER_ID: &str = "user";

/// Last interaction time per unordered pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionMemory {
    last: BTreeMap<(EntityId, EntityId), u64>,
}

impl InteractionMemory {
    fn key(a: &EntityId, b: &EntityId) -> (EntityId, EntityId) {
        if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        }
    }

    pub fn last_interaction(&self, a: &EntityId, b: &EntityId) -> Option<u64> {
        self.last.get(&Self::key(a, b)).copied()
    }

    /// Scores an interaction at `t` and records it. Returns (salience, first_time).
    pub fn touch(&mut self, a: &EntityId, b: &EntityId, t: u64, cooldown_ms: u64) -> (f64, bool) {
        let key = Self::key(a, b);
        let result = match self.last.get(&key) {
            None => (NOVEL_SALIENCE, true),
            Some(&prev) if t.saturating_sub(prev) >= cooldown_ms => (NOVEL_SALIENCE, false),
            Some(_) => (REPEAT_SALIENCE, false),
        };
        self.last.insert(key, t);
        result
    }

    pub fn len(&self) -> usize {
        self.last.len()
    }

    pub fn is_empty(&self) -> bool {
        self.last.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SocialAgent {
    cooldown_ms: u64,
    memory: InteractionMemory,
}

impl SocialAgent {
    pub fn new(config: &Config) -> Self {
        Self {
            cooldown_ms: config.social_cooldown_ms,
            memory: InteractionMemory::default(),
        }
    }

    pub fn memory(&self) -> &InteractionMemory {
        &self.memory
    }

    pub fn observe(&mut self, before: &SceneState, after: &SceneState, event: &InteractionEvent) -> Vec<IntentFeature> {
        let actor = &event.actor;
        let t = event.t;
        let location = after.entity_position(actor).unwrap_or_default();
        // (label, target, confidence, clause)
        let mut found: Vec<(Label, EntityId, f64, String)> = Vec::new();
        match (&event.kind, &event.payload) {
            (EventKind::CharacterMovement, _) => {
                let dist = |s: &SceneState, o: &EntityId| -> Option<f64> {
                    Some(s.entity_position(actor)?.distance(s.entity_position(o)?))
                };
                let faced_after = after.faced_character(actor).ok().flatten();
                let approached = faced_after
                    .as_ref()
                    .filter(|f| matches!((dist(before, f), dist(after, f)), (Some(b), Some(a)) if a < b));
                if let Some(f) = approached {
                    found.push((
                        Label::Approach,
                        f.clone(),
                        INFERRED_SPATIAL_CONFIDENCE,
                        format!("approaches {}", after.display_name(f)),
                    ));
                } else {
                    let withdrawn = before
                        .characters
                        .iter()
                        .filter(|c| &c.id != actor)
                        .filter_map(|c| Some((dist(before, &c.id)?, dist(after, &c.id)?, &c.id)))
                        .filter(|(b, a, _)| *b <= WITHDRAWAL_RANGE_M && a > b)
                        .fold(None, |best: Option<(f64, &EntityId)>, (b, _, id)| match best {
                            Some((bd, _)) if bd <= b => best,
                            _ => Some((b, id)),
                        });
                    if let Some((_, w)) = withdrawn {
                        found.push((
                            Label::Withdrawal,
                            w.clone(),
                            INFERRED_SPATIAL_CONFIDENCE,
                            format!("backs away from {}", after.display_name(w)),
                        ));
                    }
                }
                if let Some(f) = &faced_after {
                    let mutual_now = after.faced_character(f).ok().flatten().as_ref() == Some(actor);
                    let mutual_before = before.faced_character(actor).ok().flatten().as_ref() == Some(f)
                        && before.faced_character(f).ok().flatten().as_ref() == Some(actor);
                    if mutual_now && !mutual_before {
                        found.push((
                            Label::MutualOrientation,
                            f.clone(),
                            INFERRED_SPATIAL_CONFIDENCE,
                            format!("faces {}", after.display_name(f)),
                        ));
                    }
                }
            }
            (EventKind::CharacterObjectGrab, EventPayload::ObjectGrab { prop, .. }) => {
                found.push((
                    Label::PropGrab,
                    prop.clone(),
                    confidence_of(event.kind),
                    format!("takes {}", after.display_name(prop)),
                ));
            }
            (
                k,
                EventPayload::Speech {
                    addressee: Some(to), ..
                },
            ) if k.is_speech() => {
                found.push((
                    Label::DirectAddress,
                    to.clone(),
                    confidence_of(event.kind),
                    format!("addresses {}", after.display_name(to)),
                ));
            }
            (EventKind::CharacterGrab, _) => {
                found.push((
                    Label::UserTakeover,
                    EntityId::new(USER_ID),
                    confidence_of(event.kind),
                    "is taken up by the author".to_owned(),
                ));
            }
            _ => {}
        }

        // One novelty score per pair and event.
        let mut scored: BTreeMap<EntityId, (f64, bool)> = BTreeMap::new();
        found
            .into_iter()
            .map(|(label, target, conf, clause)| {
                let (s, first) = *scored
                    .entry(target.clone())
                    .or_insert_with(|| self.memory.touch(actor, &target, t, self.cooldown_ms));
                let tgt = (label != Label::UserTakeover).then_some(&target);
                let mut f = feature(
                    label,
                    actor,
                    tgt,
                    location,
                    t,
                    conf,
                    Salience::S(s),
                    clause,
                    event.event_id,
                );
                f.first_time = first;
                f
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::log::{EventDraft, SessionLog};
    use crate::scene::{bundled_fixture, Hand};
    use proptest::prelude::*;

    #[test]
    fn cooldown_examples() {
        let mut m = InteractionMemory::default();
        let (r, p) = (EntityId::new("robin"), EntityId::new("pemberton"));
        assert_eq!(m.touch(&r, &p, 0, 5000), (1.0, true));
        assert_eq!(m.touch(&p, &r, 3000, 5000), (0.2, false));
        assert_eq!(m.touch(&r, &p, 9000, 5000), (1.0, false));
        assert_eq!(m.touch(&r, &p, 13_999, 5000), (0.2, false));
        assert_eq!(m.touch(&r, &p, 18_999, 5000), (1.0, false));
    }

    fn run(
        scene: &mut SceneState,
        log: &mut SessionLog,
        agent: &mut SocialAgent,
        draft_of: impl FnOnce(&mut SceneState) -> EventDraft,
    ) -> Vec<IntentFeature> {
        let before = scene.clone();
        let draft = draft_of(scene);
        let ev = log.append_event(draft).unwrap().clone();
        agent.observe(&before, scene, &ev)
    }

    #[test]
    fn movement_speech_grab_and_attach() {
        let f = bundled_fixture("robinhood").unwrap();
        let mut s = f.scene;
        let mut l = SessionLog::new("s", "robinhood", "0");
        let mut a = SocialAgent::new(&Config::default());

        let fs = run(&mut s, &mut l, &mut a, |s| {
            s.move_character(&"mary".into(), Vec3::new(0.6, 0.0, 0.35), 1000)
                .unwrap()
        });
        let labels: Vec<_> = fs.iter().map(|f| f.semantic_label).collect();
        // They already faced each other across the square.
        assert_eq!(labels, [Label::Approach]);
        assert!(fs.iter().all(|f| f.salience == Salience::S(1.0) && f.first_time));
        assert_eq!(fs[0].clause, "approaches Robin Hood");

        let fs = run(&mut s, &mut l, &mut a, |s| {
            s.grab_character(&"mary".into(), 1100).unwrap()
        });
        assert_eq!(fs[0].semantic_label, Label::UserTakeover);
        assert_eq!(fs[0].target, None);

        let fs = run(&mut s, &mut l, &mut a, |_| {
            EventDraft::speech(
                1300,
                EventKind::UserSpeech,
                "mary".into(),
                "Robin Hood, please!",
                Some("robin".into()),
            )
        });
        assert_eq!(fs[0].semantic_label, Label::DirectAddress);
        assert_eq!(fs[0].salience, Salience::S(0.2));

        let fs = run(&mut s, &mut l, &mut a, |s| {
            s.release_character(&"mary".into(), 1350).unwrap()
        });
        assert!(fs.is_empty());

        let fs = run(&mut s, &mut l, &mut a, |s| {
            s.move_character(&"robin".into(), Vec3::new(-1.45, 0.0, -0.95), 8000)
                .unwrap()
        });
        assert_eq!(fs[0].semantic_label, Label::Approach);
        assert_eq!(fs[0].target.as_ref().unwrap(), "pemberton");

        let fs = run(&mut s, &mut l, &mut a, |s| {
            s.attach_prop(&"gold".into(), &"robin".into(), Hand::Right, 12_000)
                .unwrap()
        });
        assert_eq!(fs[0].semantic_label, Label::PropGrab);
        assert_eq!(fs[0].clause, "takes the sack of gold");
        assert_eq!(fs[0].confidence, 1.0);
    }

    #[test]
    fn withdrawal_when_backing_off() {
        let f = bundled_fixture("robinhood").unwrap();
        let mut s = f.scene;
        let mut l = SessionLog::new("s", "robinhood", "0");
        let mut a = SocialAgent::new(&Config::default());
        run(&mut s, &mut l, &mut a, |s| {
            s.move_character(&"mary".into(), Vec3::new(0.6, 0.0, 0.0), 0).unwrap()
        });
        let fs = run(&mut s, &mut l, &mut a, |s| {
            s.move_character(&"mary".into(), Vec3::new(1.8, 0.0, 0.0), 100).unwrap()
        });
        assert_eq!(fs[0].semantic_label, Label::Withdrawal);
        assert_eq!(fs[0].target.as_ref().unwrap(), "robin");
    }

    proptest! {
        // No pair is scored fully novel twice within the cool-down.
        #[test]
        fn cooldown_never_double_fires(events in proptest::collection::vec((0usize..4, 0usize..4, 0u64..4000), 1..200)) {
            let ids: Vec<EntityId> = ["a", "b", "c", "d"].iter().map(|s| EntityId::new(*s)).collect();
            let mut m = InteractionMemory::default();
            let mut t = 0;
            let mut novel: Vec<((EntityId, EntityId), u64)> = Vec::new();
            for (i, j, dt) in events {
                if i == j { continue; }
                t += dt;
                let (s, _) = m.touch(&ids[i], &ids[j], t, 5000);
                if s == 1.0 {
                    novel.push((InteractionMemory::key(&ids[i], &ids[j]), t));
                }
            }
            for (x, (px, tx)) in novel.iter().enumerate() {
                for (py, ty) in &novel[x + 1..] {
                    if px == py {
                        prop_assert!(ty - tx >= 5000);
                    }
                }
            }
        }
    }
}
