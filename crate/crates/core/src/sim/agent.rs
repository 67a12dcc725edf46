use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Millis;
use crate::data::{Answer, ReportContent, Upload};
use crate::geo::{haversine_m, GeoPoint, Geofence};
use crate::motivation::{current_weight, TaskBoard, TaskRequest};
use crate::scenario::{Checkpoint, QuestionKind, Scenario, SensorKind, TaskKind, ANY_ANSWER};

pub const MAX_SPEED_MPS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Movement {
    /// Visit the points in order, looping.
    Waypoints { points: Vec<GeoPoint> },
    /// Uniformly random points inside the scenario area.
    RandomWaypoint,
    /// Always head for the nearest checkpoint other than the one just visited.
    NearestCheckpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProfile {
    pub agent_id: String,
    pub speed_mps: f64,
    pub movement: Movement,
    pub response_dmax_m: f64,
    /// Chase the checkpoint with the highest weighted reward, overriding `movement`.
    pub point_seeking: bool,
    #[serde(default)]
    pub sensor_noise: BTreeMap<SensorKind, f64>,
    /// Spawn point; a random point in the area when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<GeoPoint>,
}

impl AgentProfile {
    pub fn new(agent_id: &str, movement: Movement) -> Self {
        Self {
            agent_id: agent_id.into(),
            speed_mps: 1.4,
            movement,
            response_dmax_m: 200.0,
            point_seeking: false,
            sensor_noise: BTreeMap::new(),
            start: None,
        }
    }
}

/// Linear response model: certain at the task, never beyond `dmax_m`.
pub fn response_probability(distance_m: f64, dmax_m: f64) -> f64 {
    if dmax_m <= 0.0 {
        return 0.0;
    }
    (1.0 - distance_m / dmax_m).clamp(0.0, 1.0)
}

/// Noise-free reading of a virtual sensor.
pub fn baseline(sensor: SensorKind) -> f64 {
    match sensor {
        SensorKind::Position => 5.0,
        SensorKind::Light => 500.0,
        SensorKind::Barometer => 1013.25,
        SensorKind::Accelerometer => 9.81,
        SensorKind::Gyroscope => 0.0,
        SensorKind::HeartRate => 72.0,
        SensorKind::BleScan => 3.0,
    }
}

/// What an agent sees of the world at one tick.
pub struct World<'a> {
    pub scenario: &'a Scenario,
    pub board: &'a TaskBoard,
    pub participant_id: &'a str,
    /// Seconds since the start of the run.
    pub t: f64,
    pub tick_s: f64,
    pub captured_at: Millis,
}

#[derive(Debug, Clone, PartialEq)]
enum Target {
    Checkpoint(String),
    Point(GeoPoint),
}

pub struct Agent {
    pub profile: AgentProfile,
    pub position: GeoPoint,
    target: Option<Target>,
    last_visited: Option<String>,
    inside: BTreeSet<String>,
    waypoint: usize,
    next_sample: BTreeMap<SensorKind, f64>,
    pub pending: Vec<TaskRequest>,
    pub rng: SplitMix64,
}

fn random_point_in(fence: &Geofence, rng: &mut SplitMix64) -> GeoPoint {
    let r = fence.radius_m * rng.random::<f64>().sqrt();
    let bearing = rng.random::<f64>() * 360.0;
    fence.center.destination(bearing, r)
}

impl Agent {
    pub fn new(profile: AgentProfile, scenario: &Scenario, mut rng: SplitMix64) -> Self {
        let position = profile.start.unwrap_or_else(|| random_point_in(&scenario.area, &mut rng));
        Self {
            profile,
            position,
            target: None,
            last_visited: None,
            inside: BTreeSet::new(),
            waypoint: 0,
            next_sample: BTreeMap::new(),
            pending: Vec::new(),
            rng,
        }
    }

    fn blocked(&self, c: &Checkpoint, world: &World<'_>) -> bool {
        c.contribution_limit.is_some_and(|limit| {
            let mine = world
                .board
                .per_participant
                .get(&c.checkpoint_id)
                .and_then(|m| m.get(world.participant_id))
                .copied()
                .unwrap_or(0);
            mine >= limit as u64
        })
    }

    /// Next checkpoint to chase. Utility is weight × base points for
    /// point-seeking agents and constant otherwise; ties go to the nearer
    /// checkpoint, then the smaller id.
    fn pick_checkpoint(&self, world: &World<'_>, seeking: bool) -> Option<String> {
        let policy = &world.scenario.motivation.reward;
        world
            .scenario
            .motivation
            .static_requests
            .iter()
            .filter(|c| self.last_visited.as_deref() != Some(c.checkpoint_id.as_str()))
            .filter(|c| !c.fence.contains(&self.position))
            .filter(|c| !self.blocked(c, world))
            .map(|c| {
                let utility = if seeking { current_weight(c, world.board, policy) * c.base_points as f64 } else { 0.0 };
                (utility, haversine_m(&self.position, &c.fence.center), c.checkpoint_id.as_str())
            })
            .max_by(|a, b| {
                a.0.total_cmp(&b.0).then_with(|| b.1.total_cmp(&a.1)).then_with(|| b.2.cmp(a.2))
            })
            .map(|(_, _, id)| id.to_string())
    }

    pub(crate) fn choose_target(&mut self, world: &World<'_>) {
        self.target = if self.profile.point_seeking {
            self.pick_checkpoint(world, true).map(Target::Checkpoint)
        } else {
            match &self.profile.movement {
                Movement::NearestCheckpoint => self.pick_checkpoint(world, false).map(Target::Checkpoint),
                Movement::Waypoints { points } if points.is_empty() => None,
                Movement::Waypoints { points } => {
                    let p = points[self.waypoint % points.len()];
                    self.waypoint += 1;
                    Some(Target::Point(p))
                }
                Movement::RandomWaypoint => Some(Target::Point(random_point_in(&world.scenario.area, &mut self.rng))),
            }
        };
    }

    pub fn target_checkpoint(&self) -> Option<&str> {
        match &self.target {
            Some(Target::Checkpoint(c)) => Some(c),
            _ => None,
        }
    }

    fn target_point(&self, world: &World<'_>) -> Option<GeoPoint> {
        match &self.target {
            Some(Target::Checkpoint(c)) => world.scenario.checkpoint(c).map(|c| c.fence.center),
            Some(Target::Point(p)) => Some(*p),
            None => None,
        }
    }

    /// Advance one tick. Returns the uploads this agent sends.
    pub fn step(&mut self, world: &World<'_>) -> Vec<Upload> {
        let mut out = Vec::new();
        if self.target.is_none() {
            self.choose_target(world);
        }
        if let Some(goal) = self.target_point(world) {
            let budget = self.profile.speed_mps * world.tick_s;
            let d = haversine_m(&self.position, &goal);
            self.position =
                if d <= budget { goal } else { self.position.destination(self.position.bearing_to(&goal), budget) };
            let arrived = match &self.target {
                Some(Target::Checkpoint(c)) => {
                    world.scenario.checkpoint(c).is_some_and(|c| c.fence.contains(&self.position))
                }
                _ => d <= budget,
            };
            if arrived {
                if let Some(Target::Checkpoint(c)) = self.target.take() {
                    self.last_visited = Some(c);
                }
                self.target = None;
            }
        }

        let now_inside: BTreeSet<String> = world
            .scenario
            .motivation
            .static_requests
            .iter()
            .filter(|c| c.fence.contains(&self.position))
            .map(|c| c.checkpoint_id.clone())
            .collect();
        for c in &world.scenario.motivation.static_requests {
            let entered = now_inside.contains(&c.checkpoint_id) && !self.inside.contains(&c.checkpoint_id);
            if entered && !self.blocked(c, world) {
                let content = self.perform(&c.task, world);
                out.push(Upload {
                    checkpoint_id: Some(c.checkpoint_id.clone()),
                    rule_id: None,
                    position: Some(self.position),
                    captured_at: world.captured_at,
                    content,
                });
            }
        }
        self.inside = now_inside;

        for (sensor, settings) in &world.scenario.sensing.sensors {
            let due = self.next_sample.get(sensor).copied().unwrap_or(0.0);
            if world.t + 1e-9 >= due {
                self.next_sample.insert(*sensor, due.max(world.t) + settings.interval_ms as f64 / 1000.0);
                let content = self.sample(*sensor);
                out.push(Upload {
                    checkpoint_id: None,
                    rule_id: None,
                    position: Some(self.position),
                    captured_at: world.captured_at,
                    content,
                });
            }
        }

        for req in std::mem::take(&mut self.pending) {
            let p = response_probability(haversine_m(&self.position, &req.fence.center), self.profile.response_dmax_m);
            if self.rng.random::<f64>() < p {
                let content = self.perform(&req.task, world);
                out.push(Upload {
                    checkpoint_id: None,
                    rule_id: Some(req.rule_id.clone()),
                    position: Some(self.position),
                    captured_at: world.captured_at,
                    content,
                });
            }
        }
        out
    }

    fn sample(&mut self, sensor: SensorKind) -> ReportContent {
        let sd = self.profile.sensor_noise.get(&sensor).copied().unwrap_or(0.0);
        let noise = match Normal::new(0.0, sd) {
            Ok(n) if sd > 0.0 => n.sample(&mut self.rng),
            _ => 0.0,
        };
        ReportContent::SensorSample { sensor, value: baseline(sensor) + noise, unit: sensor.unit().to_string() }
    }

    fn photo_ref(&mut self, world: &World<'_>) -> String {
        let salt = self.rng.next_u64();
        let bytes = format!("{}:{}:{salt}", self.profile.agent_id, world.captured_at);
        hex::encode(Sha256::digest(bytes.as_bytes()))
    }

    fn perform(&mut self, task: &TaskKind, world: &World<'_>) -> ReportContent {
        match task {
            TaskKind::Photo => ReportContent::Photo {
                blob_ref: self.photo_ref(world),
                caption: format!("photo by {}", self.profile.agent_id),
            },
            TaskKind::SensorSample { sensor } => self.sample(*sensor),
            TaskKind::Questionnaire { entry, nodes } => {
                let mut answers = Vec::new();
                let mut at = Some(entry.clone());
                while let Some(id) = at.take() {
                    let Some(node) = nodes.iter().find(|n| n.node_id == id) else { break };
                    let candidates: Vec<String> = match node.kind {
                        QuestionKind::Binary => vec!["yes".into(), "no".into()],
                        QuestionKind::Choice => node.options.clone(),
                        QuestionKind::PhotoWithText => vec![self.photo_ref(world)],
                    };
                    let open: Vec<String> = candidates
                        .into_iter()
                        .filter(|a| node.next.contains_key(a) || node.next.contains_key(ANY_ANSWER))
                        .collect();
                    if open.is_empty() {
                        break;
                    }
                    let answer = open[self.rng.random_range(0..open.len())].clone();
                    let text = (node.kind == QuestionKind::PhotoWithText).then(|| "seen here".to_string());
                    at = node.next.get(&answer).or_else(|| node.next.get(ANY_ANSWER)).cloned().flatten();
                    answers.push(Answer { node_id: node.node_id.clone(), answer, text });
                }
                ReportContent::QuestionnaireAnswer { answers }
            }
        }
    }
}
