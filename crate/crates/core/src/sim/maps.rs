//! Reference maps used by the examples, the bench and the acceptance suite.

use std::collections::BTreeMap;

use crate::geo::{GeoPoint, Geofence};
use crate::scenario::{
    Checkpoint, CouponSpec, CouponTrigger, DynamicRule, FeedbackPolicy, MotivationConfig, Period, ProcessingConfig,
    QuestionKind, QuestionnaireNode, RewardPolicy, Scenario, SensingConfig, SensorKind, SensorSettings, TaskKind,
};

use super::{AgentProfile, Movement, SimConfig};

pub const ORIGIN: GeoPoint = GeoPoint { lat: 35.0, lon: 135.0 };
const T0: i64 = 1_700_000_000_000;
const DAY_MS: i64 = 86_400_000;

fn sensors(list: &[(SensorKind, u64)]) -> SensingConfig {
    SensingConfig {
        sensors: list
            .iter()
            .map(|(k, ms)| (*k, SensorSettings { interval_ms: *ms, background: true }))
            .collect::<BTreeMap<_, _>>(),
    }
}

fn checkpoint(id: &str, at: GeoPoint, radius_m: f64, base: u32, task: TaskKind) -> Checkpoint {
    Checkpoint {
        checkpoint_id: id.into(),
        name: format!("checkpoint {id}"),
        fence: Geofence::new(at, radius_m),
        base_points: base,
        contribution_limit: None,
        task,
    }
}

fn survey() -> TaskKind {
    let node = |id: &str, kind, options: &[&str], next: &[(&str, Option<&str>)]| QuestionnaireNode {
        node_id: id.into(),
        prompt: format!("question {id}"),
        kind,
        options: options.iter().map(|s| s.to_string()).collect(),
        next: next.iter().map(|(k, v)| (k.to_string(), v.map(str::to_string))).collect(),
    };
    TaskKind::Questionnaire {
        entry: "crowded".into(),
        nodes: vec![
            node("crowded", QuestionKind::Binary, &[], &[("yes", Some("how")), ("no", None)]),
            node("how", QuestionKind::Choice, &["a little", "very", "packed"], &[("*", None)]),
        ],
    }
}

/// Three checkpoints (photo, questionnaire, light sample) around a small
/// square, one dynamic light rule, weighting and both coupon kinds on.
pub fn reference_three_checkpoint() -> Scenario {
    let o = ORIGIN;
    Scenario {
        schema_version: 1,
        scenario_id: "ref3".into(),
        name: "Campus walk".into(),
        description: "three checkpoints around the square".into(),
        area: Geofence::new(o, 600.0),
        period: Period { start: T0, end: T0 + DAY_MS },
        sensing: sensors(&[(SensorKind::Position, 5_000), (SensorKind::Light, 30_000)]),
        motivation: MotivationConfig {
            static_requests: vec![
                checkpoint("gate", o.destination(0.0, 120.0), 25.0, 10, TaskKind::Photo),
                Checkpoint {
                    contribution_limit: Some(3),
                    ..checkpoint("cafe", o.destination(120.0, 120.0), 25.0, 20, survey())
                },
                checkpoint(
                    "park",
                    o.destination(240.0, 120.0),
                    25.0,
                    15,
                    TaskKind::SensorSample { sensor: SensorKind::Light },
                ),
            ],
            dynamic_rules: vec![DynamicRule {
                rule_id: "plaza".into(),
                fence: Geofence::new(o, 40.0),
                task: TaskKind::SensorSample { sensor: SensorKind::Light },
                message: "How bright is the plaza?".into(),
            }],
            reward: RewardPolicy {
                demand_weighting_enabled: true,
                coupons: vec![
                    CouponSpec {
                        coupon_id: "drink".into(),
                        title: "Free drink".into(),
                        trigger: CouponTrigger::Points { threshold: 50 },
                    },
                    CouponSpec {
                        coupon_id: "visitor".into(),
                        title: "Cafe visitor".into(),
                        trigger: CouponTrigger::Checkpoint { checkpoint_id: "cafe".into() },
                    },
                ],
                ..RewardPolicy::default()
            },
            feedback: FeedbackPolicy { map_pins: true, timeline: true, score_panel: true },
        },
        processing: ProcessingConfig { editing: true, browsing: true, export: true },
    }
}

/// Two clusters of four checkpoints, 1.2 km apart. Every checkpoint offers the
/// same base points, so only demand weighting separates them.
pub fn reference_eight_checkpoint(weighting: bool) -> Scenario {
    let o = ORIGIN;
    let mut static_requests = Vec::with_capacity(8);
    for (cluster, bearing) in [("w", 270.0), ("e", 90.0)] {
        let hub = o.destination(bearing, 600.0);
        for i in 0..4 {
            let at = hub.destination(45.0 + 90.0 * i as f64, 100.0);
            static_requests.push(checkpoint(&format!("{cluster}{i}"), at, 20.0, 10, TaskKind::Photo));
        }
    }
    Scenario {
        schema_version: 1,
        scenario_id: if weighting { "ref8w" } else { "ref8" }.into(),
        name: "Two districts".into(),
        description: "eight equal checkpoints in two clusters".into(),
        area: Geofence::new(o, 900.0),
        period: Period { start: T0, end: T0 + DAY_MS },
        sensing: sensors(&[(SensorKind::Position, 60_000)]),
        motivation: MotivationConfig {
            static_requests,
            dynamic_rules: Vec::new(),
            reward: RewardPolicy { demand_weighting_enabled: weighting, ..RewardPolicy::default() },
            feedback: FeedbackPolicy::default(),
        },
        processing: ProcessingConfig { editing: true, browsing: true, export: true },
    }
}

/// Point-seeking walkers for the eight-checkpoint map.
pub fn seeking_walkers(seed: u64, agents: usize, duration_s: f64) -> SimConfig {
    SimConfig {
        seed,
        tick_s: 1.0,
        duration_s,
        agents: (0..agents)
            .map(|i| AgentProfile {
                point_seeking: true,
                ..AgentProfile::new(&format!("walker{i}"), Movement::NearestCheckpoint)
            })
            .collect(),
    }
}

/// A mixed crowd for the three-checkpoint map.
pub fn mixed_crowd(seed: u64, duration_s: f64) -> SimConfig {
    let mut noisy = BTreeMap::new();
    noisy.insert(SensorKind::Light, 25.0);
    SimConfig {
        seed,
        tick_s: 1.0,
        duration_s,
        agents: vec![
            AgentProfile { point_seeking: true, ..AgentProfile::new("seeker", Movement::NearestCheckpoint) },
            AgentProfile { sensor_noise: noisy, ..AgentProfile::new("wanderer", Movement::RandomWaypoint) },
            AgentProfile {
                start: Some(ORIGIN),
                speed_mps: 2.0,
                ..AgentProfile::new("loop", Movement::NearestCheckpoint)
            },
        ],
    }
}
