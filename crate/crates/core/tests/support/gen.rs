//! Seeded generators for scenarios, datasets and trajectories.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use pms_core::data::{Answer, Report, ReportContent};
use pms_core::geo::{GeoPoint, Geofence};
use pms_core::scenario::*;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_xoshiro::SplitMix64;

pub const SENSORS: [SensorKind; 7] = [
    SensorKind::Position,
    SensorKind::Light,
    SensorKind::Barometer,
    SensorKind::Accelerometer,
    SensorKind::Gyroscope,
    SensorKind::HeartRate,
    SensorKind::BleScan,
];

const WORDS: [&str; 12] =
    ["tree", "bench", "café", "<gate>", "a & b", "\"quoted\"", "x,y", "line\nbreak", "桜", "ok", "it's", "π"];

pub fn text(rng: &mut SplitMix64) -> String {
    let n = rng.random_range(0..4);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn point_near(rng: &mut SplitMix64, fence: &Geofence, within: f64) -> GeoPoint {
    let d = fence.radius_m * within * rng.random::<f64>().sqrt();
    fence.center.destination(rng.random::<f64>() * 360.0, d)
}

fn questionnaire(rng: &mut SplitMix64) -> TaskKind {
    let n = rng.random_range(1..=5);
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let kind = *[QuestionKind::Binary, QuestionKind::Choice, QuestionKind::PhotoWithText].choose(rng).unwrap();
        let options: Vec<String> = match kind {
            QuestionKind::Choice => (0..rng.random_range(1..=4)).map(|k| format!("opt{k}")).collect(),
            _ => Vec::new(),
        };
        let mut keys: Vec<String> = match kind {
            QuestionKind::Binary => vec!["yes".into(), "no".into()],
            QuestionKind::Choice => options.clone(),
            QuestionKind::PhotoWithText => Vec::new(),
        };
        if keys.is_empty() || rng.random_bool(0.3) {
            keys = vec![ANY_ANSWER.to_string()];
        }
        let mut next = BTreeMap::new();
        for (k, key) in keys.iter().enumerate() {
            // the first key chains to the following node so every node is reachable
            let target = if i + 1 == n {
                None
            } else if k == 0 {
                Some(format!("q{}", i + 1))
            } else if rng.random_bool(0.5) {
                Some(format!("q{}", rng.random_range(i + 1..n)))
            } else {
                None
            };
            next.insert(key.clone(), target);
        }
        nodes.push(QuestionnaireNode { node_id: format!("q{i}"), prompt: text(rng), kind, options, next });
    }
    TaskKind::Questionnaire { entry: "q0".into(), nodes }
}

fn task(rng: &mut SplitMix64, enabled: &[SensorKind]) -> TaskKind {
    match rng.random_range(0..3) {
        0 => TaskKind::Photo,
        1 => questionnaire(rng),
        _ => TaskKind::SensorSample { sensor: *enabled.choose(rng).unwrap() },
    }
}

/// A valid scenario. `validate_scenario` returns no violations for it.
pub fn scenario(rng: &mut SplitMix64, id: &str) -> Scenario {
    let area = Geofence::new(
        GeoPoint::new(rng.random_range(-60.0..60.0), rng.random_range(-170.0..170.0)),
        rng.random_range(300.0..20_000.0),
    );
    let start = rng.random_range(1_500_000_000_000i64..1_800_000_000_000);
    let period = Period { start, end: start + rng.random_range(1..30 * 86_400_000i64) };

    let mut sensors = BTreeMap::new();
    for s in SENSORS {
        if s == SensorKind::Position || rng.random_bool(0.4) {
            sensors
                .insert(s, SensorSettings { interval_ms: rng.random_range(100..120_000), background: rng.random_bool(0.5) });
        }
    }
    let enabled: Vec<SensorKind> = sensors.keys().copied().collect();

    let static_requests: Vec<Checkpoint> = (0..rng.random_range(0..6))
        .map(|i| Checkpoint {
            checkpoint_id: format!("c{i}"),
            name: text(rng),
            fence: Geofence::new(point_near(rng, &area, 0.9), rng.random_range(5.0..300.0)),
            base_points: rng.random_range(0..60),
            contribution_limit: rng.random_bool(0.3).then(|| rng.random_range(1..6)),
            task: task(rng, &enabled),
        })
        .collect();
    let dynamic_rules = (0..rng.random_range(0..4))
        .map(|i| DynamicRule {
            rule_id: format!("r{i}"),
            fence: Geofence::new(point_near(rng, &area, 1.2), rng.random_range(5.0..500.0)),
            task: task(rng, &enabled),
            message: text(rng),
        })
        .collect();

    let points_enabled = rng.random_bool(0.8);
    let coupons = (0..rng.random_range(0..3))
        .map(|i| CouponSpec {
            coupon_id: format!("k{i}"),
            title: text(rng),
            trigger: if !static_requests.is_empty() && rng.random_bool(0.5) {
                let c: &Checkpoint = static_requests.choose(rng).unwrap();
                CouponTrigger::Checkpoint { checkpoint_id: c.checkpoint_id.clone() }
            } else {
                CouponTrigger::Points { threshold: rng.random_range(1..500) }
            },
        })
        .collect();
    let reward = RewardPolicy {
        points_enabled,
        demand_weighting_enabled: points_enabled && rng.random_bool(0.5),
        weighting_alpha: rng.random_range(0.0..=10.0),
        coupons,
        level_threshold_points: rng.random_range(1..300),
        ranking_enabled: rng.random_bool(0.5),
    };
    Scenario {
        schema_version: 1,
        scenario_id: id.to_string(),
        name: text(rng),
        description: text(rng),
        area,
        period,
        sensing: SensingConfig { sensors },
        motivation: MotivationConfig {
            static_requests,
            dynamic_rules,
            reward,
            feedback: FeedbackPolicy {
                map_pins: rng.random_bool(0.5),
                timeline: rng.random_bool(0.5),
                score_panel: rng.random_bool(0.5),
            },
        },
        processing: ProcessingConfig {
            editing: rng.random_bool(0.5),
            browsing: rng.random_bool(0.5),
            export: rng.random_bool(0.5),
        },
    }
}

fn plain_checkpoint(s: &Scenario, id: &str) -> Checkpoint {
    Checkpoint {
        checkpoint_id: id.into(),
        name: "extra".into(),
        fence: Geofence::new(s.area.center, 20.0),
        base_points: 5,
        contribution_limit: None,
        task: TaskKind::Photo,
    }
}

fn with_questionnaire(s: &mut Scenario, nodes: Vec<QuestionnaireNode>, entry: &str) {
    let mut c = plain_checkpoint(s, "bad-q");
    c.task = TaskKind::Questionnaire { entry: entry.into(), nodes };
    s.motivation.static_requests.push(c);
}

fn qnode(id: &str, kind: QuestionKind, options: &[&str], next: &[(&str, Option<&str>)]) -> QuestionnaireNode {
    QuestionnaireNode {
        node_id: id.into(),
        prompt: "?".into(),
        kind,
        options: options.iter().map(|s| s.to_string()).collect(),
        next: next.iter().map(|(k, v)| (k.to_string(), v.map(str::to_string))).collect(),
    }
}

pub type Corruption = (&'static str, &'static str, fn(&mut Scenario));

/// Single-field corruptions of a valid scenario, each with the violation code
/// it must produce. Each one adds whatever element it needs to corrupt.
pub fn corruptions() -> Vec<Corruption> {
    vec![
        ("schema version", "unsupported schema version", |s| s.schema_version = 2),
        ("empty scenario id", "invalid identifier", |s| s.scenario_id.clear()),
        ("slash in scenario id", "invalid identifier", |s| s.scenario_id.push('/')),
        ("area latitude", "invalid coordinate", |s| s.area.center.lat = 91.0),
        ("area longitude", "invalid coordinate", |s| s.area.center.lon = f64::NAN),
        ("zero area radius", "invalid radius", |s| s.area.radius_m = 0.0),
        ("huge area radius", "invalid radius", |s| s.area.radius_m = 250_000.0),
        ("empty period", "empty period", |s| s.period.end = s.period.start),
        ("reversed period", "empty period", |s| s.period.end = s.period.start - 1),
        ("fast sensor", "interval below minimum", |s| {
            s.sensing.sensors.insert(SensorKind::Position, SensorSettings { interval_ms: 99, background: true });
        }),
        ("duplicate checkpoint", "duplicate checkpoint id", |s| {
            let c = plain_checkpoint(s, "dup");
            s.motivation.static_requests.push(c.clone());
            s.motivation.static_requests.push(c);
        }),
        ("checkpoint outside area", "checkpoint outside area", |s| {
            let mut c = plain_checkpoint(s, "far");
            c.fence.center = s.area.center.destination(90.0, s.area.radius_m * 2.0);
            s.motivation.static_requests.push(c);
        }),
        ("negative checkpoint radius", "invalid radius", |s| {
            let mut c = plain_checkpoint(s, "neg");
            c.fence.radius_m = -1.0;
            s.motivation.static_requests.push(c);
        }),
        ("zero contribution limit", "invalid contribution limit", |s| {
            let mut c = plain_checkpoint(s, "lim");
            c.contribution_limit = Some(0);
            s.motivation.static_requests.push(c);
        }),
        ("duplicate rule", "duplicate rule id", |s| {
            let r = DynamicRule {
                rule_id: "dup".into(),
                fence: Geofence::new(s.area.center, 10.0),
                task: TaskKind::Photo,
                message: String::new(),
            };
            s.motivation.dynamic_rules.push(r.clone());
            s.motivation.dynamic_rules.push(r);
        }),
        ("task on disabled sensor", "sensor not enabled", |s| {
            s.sensing.sensors.remove(&SensorKind::Barometer);
            let mut c = plain_checkpoint(s, "baro");
            c.task = TaskKind::SensorSample { sensor: SensorKind::Barometer };
            s.motivation.static_requests.push(c);
        }),
        ("weighting without points", "weighting requires points", |s| {
            s.motivation.reward.points_enabled = false;
            s.motivation.reward.demand_weighting_enabled = true;
        }),
        ("alpha too large", "alpha out of range", |s| s.motivation.reward.weighting_alpha = 10.5),
        ("negative alpha", "alpha out of range", |s| s.motivation.reward.weighting_alpha = -0.1),
        ("zero level threshold", "invalid level threshold", |s| s.motivation.reward.level_threshold_points = 0),
        ("duplicate coupon", "duplicate coupon id", |s| {
            let c = CouponSpec { coupon_id: "dup".into(), title: String::new(), trigger: CouponTrigger::Points { threshold: 1 } };
            s.motivation.reward.coupons.push(c.clone());
            s.motivation.reward.coupons.push(c);
        }),
        ("zero coupon threshold", "invalid coupon threshold", |s| {
            s.motivation.reward.coupons.push(CouponSpec {
                coupon_id: "zero".into(),
                title: String::new(),
                trigger: CouponTrigger::Points { threshold: 0 },
            });
        }),
        ("coupon on missing checkpoint", "unknown checkpoint", |s| {
            s.motivation.reward.coupons.push(CouponSpec {
                coupon_id: "ghost".into(),
                title: String::new(),
                trigger: CouponTrigger::Checkpoint { checkpoint_id: "no-such-checkpoint".into() },
            });
        }),
        ("questionnaire cycle", "cycle in questionnaire graph", |s| {
            with_questionnaire(
                s,
                vec![
                    qnode("a", QuestionKind::Binary, &[], &[("yes", Some("b")), ("no", None)]),
                    qnode("b", QuestionKind::Binary, &[], &[("*", Some("a"))]),
                ],
                "a",
            )
        }),
        ("five options", "options exceed 4", |s| {
            with_questionnaire(s, vec![qnode("a", QuestionKind::Choice, &["1", "2", "3", "4", "5"], &[("*", None)])], "a")
        }),
        ("empty questionnaire", "empty questionnaire", |s| with_questionnaire(s, vec![], "a")),
        ("bad answer key", "invalid answer key", |s| {
            with_questionnaire(s, vec![qnode("a", QuestionKind::Binary, &[], &[("maybe", None)])], "a")
        }),
        ("missing entry node", "unknown questionnaire node", |s| {
            with_questionnaire(s, vec![qnode("a", QuestionKind::Binary, &[], &[("*", None)])], "zz")
        }),
    ]
}

/// Random reports for one scenario, all inside its period.
pub fn dataset(rng: &mut SplitMix64, sid: &str, period: Period, n: usize) -> Vec<Report> {
    let participants = ["p-a", "p-b", "p&c", "p<d>"];
    (0..n)
        .map(|i| {
            let position = match rng.random_range(0..5) {
                0 => None,
                1 => Some(GeoPoint::new(rng.random_range(-90.0..=90.0), *[-180.0, 180.0].choose(rng).unwrap())),
                _ => Some(GeoPoint::new(rng.random_range(-89.0..89.0), rng.random_range(-179.9..179.9))),
            };
            let payload = match rng.random_range(0..3) {
                0 => ReportContent::SensorSample {
                    sensor: *SENSORS.choose(rng).unwrap(),
                    value: rng.random_range(-1e4..1e4),
                    unit: "u".into(),
                },
                1 => ReportContent::Photo { blob_ref: format!("{:064x}", rng.random::<u128>()), caption: text(rng) },
                _ => ReportContent::QuestionnaireAnswer {
                    answers: (0..rng.random_range(1..4))
                        .map(|k| Answer {
                            node_id: format!("q{k}"),
                            answer: text(rng),
                            text: rng.random_bool(0.3).then(|| text(rng)),
                        })
                        .collect(),
                },
            };
            let labels: BTreeSet<String> =
                (0..rng.random_range(0..3)).map(|_| (*WORDS.choose(rng).unwrap()).to_string()).collect();
            Report {
                report_id: format!("rep-{i}"),
                scenario_id: sid.into(),
                participant_id: (*participants.choose(rng).unwrap()).into(),
                checkpoint_id: None,
                rule_id: None,
                position,
                captured_at: rng.random_range(period.start..period.end),
                payload,
                labels,
                excluded: rng.random_bool(0.1),
                annotation: rng.random_bool(0.2).then(|| text(rng)),
            }
        })
        .collect()
}

/// A walk with steps of up to `max_step_m` starting somewhere in `area`.
pub fn trajectory(rng: &mut SplitMix64, area: &Geofence, len: usize, max_step_m: f64) -> Vec<GeoPoint> {
    let mut p = point_near(rng, area, 1.0);
    let mut out = vec![p];
    for _ in 1..len {
        p = p.destination(rng.random::<f64>() * 360.0, rng.random::<f64>() * max_step_m);
        out.push(p);
    }
    out
}
