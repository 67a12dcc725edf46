use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::*;
use crate::geo::Geofence;

/// Stable violation codes.
pub mod codes {
    pub const UNSUPPORTED_VERSION: &str = "unsupported schema version";
    pub const INVALID_IDENTIFIER: &str = "invalid identifier";
    pub const INVALID_COORDINATE: &str = "invalid coordinate";
    pub const INVALID_RADIUS: &str = "invalid radius";
    pub const EMPTY_PERIOD: &str = "empty period";
    pub const INTERVAL_BELOW_MINIMUM: &str = "interval below minimum";
    pub const DUPLICATE_CHECKPOINT: &str = "duplicate checkpoint id";
    pub const CHECKPOINT_OUTSIDE_AREA: &str = "checkpoint outside area";
    pub const INVALID_CONTRIBUTION_LIMIT: &str = "invalid contribution limit";
    pub const DUPLICATE_RULE: &str = "duplicate rule id";
    pub const SENSOR_NOT_ENABLED: &str = "sensor not enabled";
    pub const WEIGHTING_REQUIRES_POINTS: &str = "weighting requires points";
    pub const ALPHA_OUT_OF_RANGE: &str = "alpha out of range";
    pub const INVALID_LEVEL_THRESHOLD: &str = "invalid level threshold";
    pub const DUPLICATE_COUPON: &str = "duplicate coupon id";
    pub const INVALID_COUPON_THRESHOLD: &str = "invalid coupon threshold";
    pub const UNKNOWN_CHECKPOINT: &str = "unknown checkpoint";
    pub const EMPTY_QUESTIONNAIRE: &str = "empty questionnaire";
    pub const DUPLICATE_NODE: &str = "duplicate questionnaire node";
    pub const UNKNOWN_NODE: &str = "unknown questionnaire node";
    pub const UNREACHABLE_NODE: &str = "unreachable questionnaire node";
    pub const QUESTIONNAIRE_CYCLE: &str = "cycle in questionnaire graph";
    pub const OPTIONS_EXCEED: &str = "options exceed 4";
    pub const CHOICE_WITHOUT_OPTIONS: &str = "choice without options";
    pub const OPTIONS_ON_NON_CHOICE: &str = "options on non-choice node";
    pub const INVALID_ANSWER_KEY: &str = "invalid answer key";

    pub const ALL: &[&str] = &[
        UNSUPPORTED_VERSION,
        INVALID_IDENTIFIER,
        INVALID_COORDINATE,
        INVALID_RADIUS,
        EMPTY_PERIOD,
        INTERVAL_BELOW_MINIMUM,
        DUPLICATE_CHECKPOINT,
        CHECKPOINT_OUTSIDE_AREA,
        INVALID_CONTRIBUTION_LIMIT,
        DUPLICATE_RULE,
        SENSOR_NOT_ENABLED,
        WEIGHTING_REQUIRES_POINTS,
        ALPHA_OUT_OF_RANGE,
        INVALID_LEVEL_THRESHOLD,
        DUPLICATE_COUPON,
        INVALID_COUPON_THRESHOLD,
        UNKNOWN_CHECKPOINT,
        EMPTY_QUESTIONNAIRE,
        DUPLICATE_NODE,
        UNKNOWN_NODE,
        UNREACHABLE_NODE,
        QUESTIONNAIRE_CYCLE,
        OPTIONS_EXCEED,
        CHOICE_WITHOUT_OPTIONS,
        OPTIONS_ON_NON_CHOICE,
        INVALID_ANSWER_KEY,
    ];
}

use codes::*;

pub const MAX_WEIGHTING_ALPHA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub path: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} at {}", self.code, self.path)
    }
}

#[derive(Default)]
struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, code: &str, path: impl Into<String>) {
        self.0.push(Violation { code: code.to_string(), path: path.into() });
    }

    fn check(&mut self, ok: bool, code: &str, path: impl Into<String>) {
        if !ok {
            self.push(code, path);
        }
    }

    fn identifier(&mut self, id: &str, path: impl Into<String>) {
        let ok = !id.is_empty()
            && id.len() <= 128
            && !id.chars().any(|c| matches!(c, '/' | '#' | '+') || c.is_whitespace() || c.is_control());
        self.check(ok, INVALID_IDENTIFIER, path);
    }

    fn fence(&mut self, fence: &Geofence, path: &str) {
        self.check(fence.center.is_valid(), INVALID_COORDINATE, format!("{path}.center"));
        self.check(fence.radius_is_valid(), INVALID_RADIUS, format!("{path}.radius_m"));
    }
}

/// Check every scenario invariant. An empty result means the scenario is valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut v = Collector::default();
    v.check(s.schema_version == SCHEMA_VERSION, UNSUPPORTED_VERSION, "schema_version");
    v.identifier(&s.scenario_id, "scenario_id");
    v.fence(&s.area, "area");
    v.check(s.period.start < s.period.end, EMPTY_PERIOD, "period");

    for (sensor, settings) in &s.sensing.sensors {
        v.check(
            settings.interval_ms >= MIN_SENSOR_INTERVAL_MS,
            INTERVAL_BELOW_MINIMUM,
            format!("sensing.sensors.{}.interval_ms", sensor.as_str()),
        );
    }

    let m = &s.motivation;
    let mut seen = HashSet::new();
    for (i, c) in m.static_requests.iter().enumerate() {
        let path = format!("motivation.static_requests[{i}]");
        v.identifier(&c.checkpoint_id, format!("{path}.checkpoint_id"));
        v.check(seen.insert(c.checkpoint_id.as_str()), DUPLICATE_CHECKPOINT, format!("{path}.checkpoint_id"));
        v.fence(&c.fence, &format!("{path}.fence"));
        if c.fence.center.is_valid() && s.area.center.is_valid() {
            v.check(s.area.contains(&c.fence.center), CHECKPOINT_OUTSIDE_AREA, format!("{path}.fence.center"));
        }
        v.check(c.contribution_limit != Some(0), INVALID_CONTRIBUTION_LIMIT, format!("{path}.contribution_limit"));
    }

    let mut seen_rules = HashSet::new();
    for (i, r) in m.dynamic_rules.iter().enumerate() {
        let path = format!("motivation.dynamic_rules[{i}]");
        v.identifier(&r.rule_id, format!("{path}.rule_id"));
        v.check(seen_rules.insert(r.rule_id.as_str()), DUPLICATE_RULE, format!("{path}.rule_id"));
        v.fence(&r.fence, &format!("{path}.fence"));
    }

    for (path, task) in task_paths(s) {
        match task {
            TaskKind::Photo => {}
            TaskKind::SensorSample { sensor } => {
                v.check(s.sensing.is_enabled(*sensor), SENSOR_NOT_ENABLED, format!("{path}.sensor"));
            }
            TaskKind::Questionnaire { entry, nodes } => check_questionnaire(&mut v, entry, nodes, &path),
        }
    }

    let r = &m.reward;
    v.check(
        !r.demand_weighting_enabled || r.points_enabled,
        WEIGHTING_REQUIRES_POINTS,
        "motivation.reward.demand_weighting_enabled",
    );
    v.check(
        r.weighting_alpha.is_finite() && (0.0..=MAX_WEIGHTING_ALPHA).contains(&r.weighting_alpha),
        ALPHA_OUT_OF_RANGE,
        "motivation.reward.weighting_alpha",
    );
    v.check(r.level_threshold_points > 0, INVALID_LEVEL_THRESHOLD, "motivation.reward.level_threshold_points");
    let mut seen_coupons = HashSet::new();
    for (i, c) in r.coupons.iter().enumerate() {
        let path = format!("motivation.reward.coupons[{i}]");
        v.identifier(&c.coupon_id, format!("{path}.coupon_id"));
        v.check(seen_coupons.insert(c.coupon_id.as_str()), DUPLICATE_COUPON, format!("{path}.coupon_id"));
        match &c.trigger {
            CouponTrigger::Points { threshold } => {
                v.check(*threshold > 0, INVALID_COUPON_THRESHOLD, format!("{path}.trigger.threshold"))
            }
            CouponTrigger::Checkpoint { checkpoint_id } => v.check(
                s.checkpoint(checkpoint_id).is_some(),
                UNKNOWN_CHECKPOINT,
                format!("{path}.trigger.checkpoint_id"),
            ),
        }
    }
    v.0
}

fn check_questionnaire(v: &mut Collector, entry: &str, nodes: &[QuestionnaireNode], path: &str) {
    if nodes.is_empty() {
        v.push(EMPTY_QUESTIONNAIRE, format!("{path}.nodes"));
        return;
    }
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        let npath = format!("{path}.nodes[{i}]");
        v.identifier(&n.node_id, format!("{npath}.node_id"));
        if index.insert(n.node_id.as_str(), i).is_some() {
            v.push(DUPLICATE_NODE, format!("{npath}.node_id"));
        }
        match n.kind {
            QuestionKind::Choice => {
                v.check(!n.options.is_empty(), CHOICE_WITHOUT_OPTIONS, format!("{npath}.options"));
                v.check(n.options.len() <= MAX_CHOICE_OPTIONS, OPTIONS_EXCEED, format!("{npath}.options"));
            }
            _ => v.check(n.options.is_empty(), OPTIONS_ON_NON_CHOICE, format!("{npath}.options")),
        }
        for answer in n.next.keys() {
            v.check(answer_is_valid(n, answer), INVALID_ANSWER_KEY, format!("{npath}.next.{answer}"));
        }
    }
    if !index.contains_key(entry) {
        v.push(UNKNOWN_NODE, format!("{path}.entry"));
    }
    for (i, n) in nodes.iter().enumerate() {
        for (answer, target) in &n.next {
            if let Some(t) = target {
                if !index.contains_key(t.as_str()) {
                    v.push(UNKNOWN_NODE, format!("{path}.nodes[{i}].next.{answer}"));
                }
            }
        }
    }

    if has_cycle(nodes, &index) {
        v.push(QUESTIONNAIRE_CYCLE, format!("{path}.nodes"));
    }

    if let Some(&start) = index.get(entry) {
        let mut reached = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for t in nodes[i].next.values().flatten() {
                if let Some(&j) = index.get(t.as_str()) {
                    if reached.insert(j) {
                        stack.push(j);
                    }
                }
            }
        }
        for (i, _) in nodes.iter().enumerate().filter(|(i, _)| !reached.contains(i)) {
            v.push(UNREACHABLE_NODE, format!("{path}.nodes[{i}]"));
        }
    }
}

/// Whether `answer` is a legal key in the node's `next` map.
pub fn answer_is_valid(node: &QuestionnaireNode, answer: &str) -> bool {
    if answer == ANY_ANSWER {
        return true;
    }
    match node.kind {
        QuestionKind::Binary => answer == "yes" || answer == "no",
        QuestionKind::Choice => node.options.iter().any(|o| o == answer),
        QuestionKind::PhotoWithText => false,
    }
}

fn has_cycle(nodes: &[QuestionnaireNode], index: &BTreeMap<&str, usize>) -> bool {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut marks = vec![Mark::New; nodes.len()];
    for root in 0..nodes.len() {
        if marks[root] != Mark::New {
            continue;
        }
        // iterative DFS: (node, next child cursor)
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        marks[root] = Mark::Active;
        while let Some(&mut (i, ref mut cursor)) = stack.last_mut() {
            let targets: Vec<usize> = nodes[i]
                .next
                .values()
                .flatten()
                .filter_map(|t| index.get(t.as_str()).copied())
                .collect();
            if *cursor < targets.len() {
                let j = targets[*cursor];
                *cursor += 1;
                match marks[j] {
                    Mark::Active => return true,
                    Mark::New => {
                        marks[j] = Mark::Active;
                        stack.push((j, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                marks[i] = Mark::Done;
                stack.pop();
            }
        }
    }
    false
}
