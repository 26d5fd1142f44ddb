use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{confidence_of, feature, humanize, IntentFeature, Label, Salience, INFERRED_SPATIAL_CONFIDENCE};
use crate::config::Config;
use crate::geometry::Vec3;
use crate::log::{EventKind, InteractionEvent};
use crate::scene::{EntityId, SceneState};

/// Salience of zone entry and exit.
pub const ZONE_SALIENCE: f64 = 1.0;
/// Salience of proximity and grouping changes.
pub const PROXIMITY_SALIENCE: f64 = 0.8;
/// Smallest connected group reported as a grouping.
pub const GROUP_SIZE: usize = 3;

/// Recent positions of one entity, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementTrail {
    pub entity: EntityId,
    capacity: usize,
    samples: VecDeque<(u64, Vec3)>,
}

impl MovementTrail {
    pub fn new(entity: EntityId, capacity: usize) -> Self {
        Self {
            entity,
            capacity: capacity.max(1),
            samples: VecDeque::new(),
        }
    }

    /// Samples older than the newest one are ignored.
    pub fn push(&mut self, t: u64, p: Vec3) {
        if self.samples.back().is_some_and(|(last, _)| t < *last) {
            return;
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((t, p));
    }

    pub fn samples(&self) -> impl Iterator<Item = &(u64, Vec3)> {
        self.samples.iter()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Path length over the buffered samples.
    pub fn path_length(&self) -> f64 {
        self.samples
            .iter()
            .zip(self.samples.iter().skip(1))
            .map(|((_, a), (_, b))| a.distance(*b))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct EnvironmentAgent {
    movement_threshold: f64,
    interaction_radius: f64,
    trail_capacity: usize,
    trails: BTreeMap<EntityId, MovementTrail>,
}

impl EnvironmentAgent {
    pub fn new(config: &Config) -> Self {
        Self {
            movement_threshold: config.movement_threshold_m,
            interaction_radius: config.interaction_radius_m,
            trail_capacity: config.trail_capacity,
            trails: BTreeMap::new(),
        }
    }

    pub fn trail(&self, id: &EntityId) -> Option<&MovementTrail> {
        self.trails.get(id)
    }

    /// Movement salience: linear up to twice the threshold.
    pub fn movement_salience(&self, displacement: f64) -> f64 {
        (displacement / (2.0 * self.movement_threshold)).clamp(0.0, 1.0)
    }

    pub fn observe(&mut self, before: &SceneState, after: &SceneState, event: &InteractionEvent) -> Vec<IntentFeature> {
        let mut out = Vec::new();
        let t = event.t;
        let actor = &event.actor;

        let mut moved: Vec<&EntityId> = Vec::new();
        for c in &after.characters {
            if let Some(prev) = before.character(&c.id) {
                if prev.position != c.position {
                    moved.push(&c.id);
                    self.record(&c.id, t, c.position);
                }
            }
        }
        for p in &after.props {
            if before.prop(&p.id).is_some_and(|prev| prev.position != p.position) {
                self.record(&p.id, t, p.position);
            }
        }

        if event.kind == EventKind::CharacterMovement {
            if let (Some(a), Some(b)) = (before.character(actor), after.character(actor)) {
                let d = a.position.distance(b.position);
                if d > self.movement_threshold {
                    let target = after.nearest_other_character(actor);
                    let clause = match &target {
                        Some(o) => {
                            let op_before = before.entity_position(o).unwrap_or(b.position);
                            let op_after = after.entity_position(o).unwrap_or(b.position);
                            let dir = if b.position.distance(op_after) < a.position.distance(op_before) {
                                "toward"
                            } else {
                                "away from"
                            };
                            format!("moves {dir} {}", after.display_name(o))
                        }
                        None => "moves across the stage".to_owned(),
                    };
                    out.push(feature(
                        Label::MovementTrail,
                        actor,
                        target.as_ref(),
                        b.position,
                        t,
                        confidence_of(event.kind),
                        Salience::E(self.movement_salience(d)),
                        clause,
                        event.event_id,
                    ));
                }
            }
        }

        for id in &moved {
            let (Some(a), Some(b)) = (before.character(id), after.character(id)) else {
                continue;
            };
            let conf = if *id == actor {
                confidence_of(event.kind)
            } else {
                INFERRED_SPATIAL_CONFIDENCE
            };
            let was: BTreeSet<EntityId> = before.zone_membership(a.position).into_iter().collect();
            let now: BTreeSet<EntityId> = after.zone_membership(b.position).into_iter().collect();
            for z in now.difference(&was) {
                out.push(feature(
                    Label::ZoneEntry,
                    id,
                    Some(z),
                    b.position,
                    t,
                    conf,
                    Salience::E(ZONE_SALIENCE),
                    format!("enters {}", humanize(z.as_str())),
                    event.event_id,
                ));
            }
            for z in was.difference(&now) {
                out.push(feature(
                    Label::ZoneExit,
                    id,
                    Some(z),
                    b.position,
                    t,
                    conf,
                    Salience::E(ZONE_SALIENCE),
                    format!("leaves {}", humanize(z.as_str())),
                    event.event_id,
                ));
            }
        }

        let r = self.interaction_radius;
        let mut seen_pairs: BTreeSet<(EntityId, EntityId)> = BTreeSet::new();
        for id in &moved {
            let c = after.character(id).expect("moved ids come from the scene");
            let c_before = before.character(id).expect("present before");
            for o in after.characters.iter().filter(|o| &o.id != *id) {
                let key = ordered(id, &o.id);
                if seen_pairs.contains(&key) {
                    continue;
                }
                let o_before = before.character(&o.id).map_or(o.position, |x| x.position);
                if c_before.position.distance(o_before) > r && c.position.distance(o.position) <= r {
                    seen_pairs.insert(key);
                    out.push(feature(
                        Label::CharacterProximity,
                        id,
                        Some(&o.id),
                        c.position,
                        t,
                        INFERRED_SPATIAL_CONFIDENCE,
                        Salience::E(PROXIMITY_SALIENCE),
                        format!("comes close to {}", after.display_name(&o.id)),
                        event.event_id,
                    ));
                }
            }
            for p in &after.props {
                if p.attached_to.as_ref().is_some_and(|a| &a.character == *id) {
                    continue;
                }
                let p_before = before.prop(&p.id).map_or(p.position, |x| x.position);
                if c_before.position.distance(p_before) > r && c.position.distance(p.position) <= r {
                    out.push(feature(
                        Label::PropProximity,
                        id,
                        Some(&p.id),
                        c.position,
                        t,
                        INFERRED_SPATIAL_CONFIDENCE,
                        Salience::E(PROXIMITY_SALIENCE),
                        format!("comes within reach of {}", after.display_name(&p.id)),
                        event.event_id,
                    ));
                }
            }
        }

        if moved.contains(&actor) {
            let group_after = group_of(after, actor, r);
            let group_before = group_of(before, actor, r);
            if group_after.len() >= GROUP_SIZE && group_before.len() < GROUP_SIZE {
                let others: Vec<String> = group_after
                    .iter()
                    .filter(|g| *g != actor)
                    .map(|g| after.display_name(g))
                    .collect();
                let position = after.entity_position(actor).unwrap_or(Vec3::ZERO);
                out.push(feature(
                    Label::ProximityGrouping,
                    actor,
                    None,
                    position,
                    t,
                    INFERRED_SPATIAL_CONFIDENCE,
                    Salience::E(PROXIMITY_SALIENCE),
                    format!("gathers with {}", others.join(" and ")),
                    event.event_id,
                ));
            }
        }
        out
    }

    fn record(&mut self, id: &EntityId, t: u64, p: Vec3) {
        let cap = self.trail_capacity;
        self.trails
            .entry(id.clone())
            .or_insert_with(|| MovementTrail::new(id.clone(), cap))
            .push(t, p);
    }
}

fn ordered(a: &EntityId, b: &EntityId) -> (EntityId, EntityId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Characters connected to `id` through chains of distance <= r, in scene order.
fn group_of(scene: &SceneState, id: &EntityId, r: f64) -> Vec<EntityId> {
    let n = scene.characters.len();
    let Some(start) = scene.characters.iter().position(|c| &c.id == id) else {
        return Vec::new();
    };
    let mut member = vec![false; n];
    member[start] = true;
    let mut stack = vec![start];
    while let Some(i) = stack.pop() {
        let here = scene.characters[i].position;
        for (j, c) in scene.characters.iter().enumerate() {
            if !member[j] && here.distance(c.position) <= r {
                member[j] = true;
                stack.push(j);
            }
        }
    }
    scene
        .characters
        .iter()
        .zip(member)
        .filter(|(_, m)| *m)
        .map(|(c, _)| c.id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::SessionLog;
    use crate::scene::bundled_fixture;
    use proptest::prelude::*;

    fn setup() -> (SceneState, SessionLog, EnvironmentAgent) {
        let f = bundled_fixture("robinhood").unwrap();
        (
            f.scene,
            SessionLog::new("s", "robinhood", "0"),
            EnvironmentAgent::new(&Config::default()),
        )
    }

    fn drag(
        scene: &mut SceneState,
        log: &mut SessionLog,
        agent: &mut EnvironmentAgent,
        who: &str,
        to: Vec3,
        t: u64,
    ) -> Vec<IntentFeature> {
        let before = scene.clone();
        let draft = scene.move_character(&who.into(), to, t).unwrap();
        let ev = log.append_event(draft).unwrap().clone();
        agent.observe(&before, scene, &ev)
    }

    fn labels(fs: &[IntentFeature]) -> Vec<Label> {
        fs.iter().map(|f| f.semantic_label).collect()
    }

    #[test]
    fn displacement_threshold() {
        let (mut s, mut l, mut a) = setup();
        let fs = drag(&mut s, &mut l, &mut a, "robin", Vec3::new(0.6, 0.0, 0.0), 10);
        let m: Vec<_> = fs.iter().filter(|f| f.semantic_label == Label::MovementTrail).collect();
        assert_eq!(m.len(), 1);
        assert!((m[0].salience.value() - 0.6).abs() < 1e-12);
        assert_eq!(m[0].clause, "moves toward Mary");
        let fs = drag(&mut s, &mut l, &mut a, "robin", Vec3::new(0.65, 0.0, 0.0), 20);
        assert!(!labels(&fs).contains(&Label::MovementTrail));
        let fs = drag(&mut s, &mut l, &mut a, "robin", Vec3::new(1.15, 0.0, 0.0), 30);
        assert!(
            !labels(&fs).contains(&Label::MovementTrail),
            "exactly 0.5 m is not above threshold"
        );
    }

    #[test]
    fn hiding_zone_entry_is_fully_salient() {
        let (mut s, mut l, mut a) = setup();
        let fs = drag(&mut s, &mut l, &mut a, "robin", Vec3::new(-1.45, 0.0, -0.95), 10);
        let z = fs.iter().find(|f| f.semantic_label == Label::ZoneEntry).unwrap();
        assert_eq!(z.salience, Salience::E(1.0));
        assert_eq!(z.target.as_ref().unwrap(), "sherwood");
        assert_eq!(z.clause, "enters Sherwood");
        let fs = drag(&mut s, &mut l, &mut a, "robin", Vec3::new(0.0, 0.0, 0.0), 20);
        assert!(labels(&fs).contains(&Label::ZoneExit));
    }

    #[test]
    fn proximity_fires_on_crossing_only() {
        let (mut s, mut l, mut a) = setup();
        let fs = drag(&mut s, &mut l, &mut a, "robin", Vec3::new(2.25, 0.0, 1.35), 10);
        assert!(labels(&fs).contains(&Label::PropProximity));
        assert!(labels(&fs).contains(&Label::CharacterProximity));
        let fs = drag(&mut s, &mut l, &mut a, "robin", Vec3::new(2.3, 0.0, 1.35), 20);
        assert!(!labels(&fs).contains(&Label::PropProximity));
        assert!(fs
            .iter()
            .all(|f| f.confidence == 0.6 || f.semantic_label == Label::MovementTrail));
    }

    #[test]
    fn grouping_of_three() {
        let (mut s, mut l, mut a) = setup();
        drag(&mut s, &mut l, &mut a, "mary", Vec3::new(0.3, 0.0, 0.0), 10);
        let fs = drag(&mut s, &mut l, &mut a, "pemberton", Vec3::new(-0.3, 0.0, 0.0), 20);
        let g = fs
            .iter()
            .find(|f| f.semantic_label == Label::ProximityGrouping)
            .unwrap();
        assert_eq!(g.clause, "gathers with Mary and Robin Hood");
        assert_eq!(g.confidence, 0.6);
    }

    #[test]
    fn trail_ring_buffer() {
        let mut tr = MovementTrail::new("x".into(), 3);
        for i in 0..5u64 {
            tr.push(i, Vec3::new(i as f64, 0.0, 0.0));
        }
        tr.push(1, Vec3::ZERO);
        let ts: Vec<u64> = tr.samples().map(|(t, _)| *t).collect();
        assert_eq!(ts, [2, 3, 4]);
        assert!((tr.path_length() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn sub_threshold_walk_is_silent(steps in proptest::collection::vec((0.0f64..std::f64::consts::TAU, 0.0f64..0.4999), 1..60)) {
            let (mut s, mut l, mut a) = setup();
            let mut t = 0;
            for (angle, len) in steps {
                let p = s.character(&"robin".into()).unwrap().position;
                let target = s.stage_bounds.clamp(p + Vec3::new(angle.cos(), 0.0, angle.sin()) * len);
                t += 100;
                let fs = drag(&mut s, &mut l, &mut a, "robin", target, t);
                prop_assert!(!labels(&fs).contains(&Label::MovementTrail));
                prop_assert!(fs.iter().all(IntentFeature::is_well_formed));
            }
        }

        #[test]
        fn sweep_matches_threshold(d in 0.0f64..1.4) {
            let (mut s, mut l, mut a) = setup();
            let fs = drag(&mut s, &mut l, &mut a, "robin", Vec3::new(d, 0.0, 0.0), 10);
            let moved = s.character(&"robin".into()).unwrap().position.x;
            let n = fs.iter().filter(|f| f.semantic_label == Label::MovementTrail).count();
            prop_assert_eq!(n, usize::from(moved > 0.5));
        }
    }
}
