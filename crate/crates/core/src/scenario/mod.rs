//! Scenario documents: the declarative description of one sensing campaign.
//!
//! The external form is strict JSON with a top-level `schema_version: 1`.
//! Unknown fields are rejected and every field except
//! `Checkpoint::contribution_limit` is required, so a parsed document always
//! re-serializes to exactly its canonical form.

mod joincode;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::clock::Millis;
use crate::geo::Geofence;

pub use joincode::{decode_join_code, generate_join_code, generate_join_code_with, JoinCode, JoinCodeError, JoinCodeParts};
pub use validate::{answer_is_valid, codes, validate_scenario, Violation};

pub const SCHEMA_VERSION: u32 = 1;
pub const MAX_CHOICE_OPTIONS: usize = 4;
pub const MIN_SENSOR_INTERVAL_MS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub scenario_id: String,
    pub name: String,
    pub description: String,
    /// Overall sensing area.
    pub area: Geofence,
    pub period: Period,
    pub sensing: SensingConfig,
    pub motivation: MotivationConfig,
    pub processing: ProcessingConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Period {
    pub start: Millis,
    pub end: Millis,
}

impl Period {
    pub fn contains(&self, t: Millis) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Position,
    Light,
    Barometer,
    Accelerometer,
    Gyroscope,
    HeartRate,
    BleScan,
}

impl SensorKind {
    pub const ALL: [SensorKind; 7] = [
        SensorKind::Position,
        SensorKind::Light,
        SensorKind::Barometer,
        SensorKind::Accelerometer,
        SensorKind::Gyroscope,
        SensorKind::HeartRate,
        SensorKind::BleScan,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SensorKind::Position => "position",
            SensorKind::Light => "light",
            SensorKind::Barometer => "barometer",
            SensorKind::Accelerometer => "accelerometer",
            SensorKind::Gyroscope => "gyroscope",
            SensorKind::HeartRate => "heart_rate",
            SensorKind::BleScan => "ble_scan",
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            SensorKind::Position => "deg",
            SensorKind::Light => "lx",
            SensorKind::Barometer => "hPa",
            SensorKind::Accelerometer => "m/s2",
            SensorKind::Gyroscope => "rad/s",
            SensorKind::HeartRate => "bpm",
            SensorKind::BleScan => "devices",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSettings {
    pub interval_ms: u64,
    pub background: bool,
}

/// Implicit sensing setup. A sensor is enabled iff it has an entry.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingConfig {
    pub sensors: BTreeMap<SensorKind, SensorSettings>,
}

impl SensingConfig {
    pub fn is_enabled(&self, sensor: SensorKind) -> bool {
        self.sensors.contains_key(&sensor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Binary,
    Choice,
    PhotoWithText,
}

/// One step of a questionnaire. `next` maps an answer to the following node;
/// `null` marks the answer as terminal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionnaireNode {
    pub node_id: String,
    pub prompt: String,
    pub kind: QuestionKind,
    pub options: Vec<String>,
    pub next: BTreeMap<String, Option<String>>,
}

/// Answer key that matches any answer on a node.
pub const ANY_ANSWER: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskKind {
    Photo,
    Questionnaire {
        entry: String,
        nodes: Vec<QuestionnaireNode>,
    },
    SensorSample {
        sensor: SensorKind,
    },
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Photo => "photo",
            TaskKind::Questionnaire { .. } => "questionnaire",
            TaskKind::SensorSample { .. } => "sensor_sample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub checkpoint_id: String,
    pub name: String,
    pub fence: Geofence,
    pub base_points: u32,
    /// Per-participant cap on accepted contributions; absent means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contribution_limit: Option<u32>,
    pub task: TaskKind,
}

/// A geofence that pushes a task request to whoever enters it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicRule {
    pub rule_id: String,
    pub fence: Geofence,
    pub task: TaskKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouponTrigger {
    Points { threshold: u64 },
    Checkpoint { checkpoint_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouponSpec {
    pub coupon_id: String,
    pub title: String,
    pub trigger: CouponTrigger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardPolicy {
    pub points_enabled: bool,
    pub demand_weighting_enabled: bool,
    pub weighting_alpha: f64,
    pub coupons: Vec<CouponSpec>,
    pub level_threshold_points: u64,
    pub ranking_enabled: bool,
}

impl Default for RewardPolicy {
    fn default() -> Self {
        Self {
            points_enabled: true,
            demand_weighting_enabled: false,
            weighting_alpha: 1.0,
            coupons: Vec::new(),
            level_threshold_points: 100,
            ranking_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackPolicy {
    pub map_pins: bool,
    pub timeline: bool,
    pub score_panel: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotivationConfig {
    pub static_requests: Vec<Checkpoint>,
    pub dynamic_rules: Vec<DynamicRule>,
    pub reward: RewardPolicy,
    pub feedback: FeedbackPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessingConfig {
    pub editing: bool,
    pub browsing: bool,
    pub export: bool,
}

/// The eight platform functions a scenario can combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Function {
    ImplicitSensing,
    ExplicitSensing,
    Request,
    Reward,
    Feedback,
    Editing,
    Browsing,
    Export,
}

impl Function {
    pub const ALL: [Function; 8] = [
        Function::ImplicitSensing,
        Function::ExplicitSensing,
        Function::Request,
        Function::Reward,
        Function::Feedback,
        Function::Editing,
        Function::Browsing,
        Function::Export,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Function::ImplicitSensing => "F1",
            Function::ExplicitSensing => "F2",
            Function::Request => "F3",
            Function::Reward => "F4",
            Function::Feedback => "F5",
            Function::Editing => "F6",
            Function::Browsing => "F7",
            Function::Export => "F8",
        }
    }
}

impl Scenario {
    pub fn checkpoint(&self, id: &str) -> Option<&Checkpoint> {
        self.motivation.static_requests.iter().find(|c| c.checkpoint_id == id)
    }

    pub fn dynamic_rule(&self, id: &str) -> Option<&DynamicRule> {
        self.motivation.dynamic_rules.iter().find(|r| r.rule_id == id)
    }

    fn tasks(&self) -> impl Iterator<Item = &TaskKind> {
        self.motivation
            .static_requests
            .iter()
            .map(|c| &c.task)
            .chain(self.motivation.dynamic_rules.iter().map(|r| &r.task))
    }

    /// The function modules this scenario switches on.
    pub fn functions(&self) -> BTreeSet<Function> {
        let m = &self.motivation;
        let fb = &m.feedback;
        let mut out = BTreeSet::new();
        let mut add = |on: bool, f: Function| {
            if on {
                out.insert(f);
            }
        };
        add(!self.sensing.sensors.is_empty(), Function::ImplicitSensing);
        add(
            self.tasks().any(|t| !matches!(t, TaskKind::SensorSample { .. })),
            Function::ExplicitSensing,
        );
        add(
            !m.static_requests.is_empty() || !m.dynamic_rules.is_empty(),
            Function::Request,
        );
        add(m.reward.points_enabled || !m.reward.coupons.is_empty(), Function::Reward);
        add(fb.map_pins || fb.timeline || fb.score_panel, Function::Feedback);
        add(self.processing.editing, Function::Editing);
        add(self.processing.browsing, Function::Browsing);
        add(self.processing.export, Function::Export);
        out
    }

    /// Canonical serialization (sorted keys, compact).
    pub fn to_canonical(&self) -> String {
        canonical::to_canonical_string(self).expect("scenario serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown field at line {line}, column {column}: {message}")]
    UnknownField { line: usize, column: usize, message: String },
    #[error("missing field at line {line}, column {column}: {message}")]
    MissingField { line: usize, column: usize, message: String },
    #[error("invalid value at line {line}, column {column}: {message}")]
    InvalidValue { line: usize, column: usize, message: String },
    #[error("unsupported schema version {0}")]
    UnsupportedVersion(u32),
    #[error("{code} at {path}")]
    Structure { code: &'static str, path: String },
}

impl ScenarioError {
    /// Parse-stage codes; structural codes come from [`codes::ALL`].
    pub const CODES: &'static [&'static str] = &["syntax error", "unknown field", "missing field", "invalid value"];

    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::Syntax { .. } => "syntax error",
            ScenarioError::UnknownField { .. } => "unknown field",
            ScenarioError::MissingField { .. } => "missing field",
            ScenarioError::InvalidValue { .. } => "invalid value",
            ScenarioError::UnsupportedVersion(_) => codes::UNSUPPORTED_VERSION,
            ScenarioError::Structure { code, .. } => code,
        }
    }

    fn from_json(err: serde_json::Error) -> Self {
        let (line, column) = (err.line(), err.column());
        let message = err.to_string();
        match err.classify() {
            serde_json::error::Category::Data if message.starts_with("unknown field") => {
                ScenarioError::UnknownField { line, column, message }
            }
            serde_json::error::Category::Data if message.starts_with("missing field") => {
                ScenarioError::MissingField { line, column, message }
            }
            serde_json::error::Category::Data => ScenarioError::InvalidValue { line, column, message },
            _ => ScenarioError::Syntax { line, column, message },
        }
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: Option<u32>,
}

/// Parse a scenario document.
///
/// Besides JSON syntax and field strictness this rejects the one structural
/// limit a node can violate on its own: a choice question with more than four
/// options. Graph- and scenario-level rules are left to [`validate_scenario`].
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(ScenarioError::from_json)?;
    match probe.schema_version {
        Some(SCHEMA_VERSION) | None => {}
        Some(v) => return Err(ScenarioError::UnsupportedVersion(v)),
    }
    let scenario: Scenario = serde_json::from_str(text).map_err(ScenarioError::from_json)?;
    for (path, task) in task_paths(&scenario) {
        if let TaskKind::Questionnaire { nodes, .. } = task {
            for (i, node) in nodes.iter().enumerate() {
                if node.options.len() > MAX_CHOICE_OPTIONS {
                    return Err(ScenarioError::Structure {
                        code: codes::OPTIONS_EXCEED,
                        path: format!("{path}.nodes[{i}].options"),
                    });
                }
            }
        }
    }
    Ok(scenario)
}

pub(crate) fn task_paths(s: &Scenario) -> Vec<(String, &TaskKind)> {
    let m = &s.motivation;
    m.static_requests
        .iter()
        .enumerate()
        .map(|(i, c)| (format!("motivation.static_requests[{i}].task"), &c.task))
        .chain(
            m.dynamic_rules
                .iter()
                .enumerate()
                .map(|(i, r)| (format!("motivation.dynamic_rules[{i}].task"), &r.task)),
        )
        .collect()
}
