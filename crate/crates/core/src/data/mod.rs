//! Collected reports, non-destructive editing, browsing and export.
//!
//! Originals are immutable once stored. Edits are an append-only log folded
//! over the originals to produce the view; restoring clears the log.

mod export;
mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Millis;
use crate::geo::GeoPoint;
use crate::scenario::SensorKind;

pub use export::{csv_header, to_csv, to_gpx, to_json, to_kml, CSV_COLUMNS};
pub use store::{DataStore, DatasetConfig, EditSummary, ParticipantRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Answer {
    pub node_id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReportContent {
    SensorSample { sensor: SensorKind, value: f64, unit: String },
    Photo { blob_ref: String, caption: String },
    QuestionnaireAnswer { answers: Vec<Answer> },
}

impl ReportContent {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ReportContent::SensorSample { .. } => "sensor_sample",
            ReportContent::Photo { .. } => "photo",
            ReportContent::QuestionnaireAnswer { .. } => "questionnaire_answer",
        }
    }
}

/// What a participant sends on its uplink topic. The envelope supplies the
/// report id, the participant and the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Upload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<GeoPoint>,
    pub captured_at: Millis,
    pub content: ReportContent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub report_id: String,
    pub scenario_id: String,
    pub participant_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<GeoPoint>,
    pub captured_at: Millis,
    pub payload: ReportContent,
    #[serde(default)]
    pub labels: BTreeSet<String>,
    #[serde(default)]
    pub excluded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

impl Report {
    pub fn from_upload(report_id: &str, scenario_id: &str, participant_id: &str, u: Upload) -> Self {
        Report {
            report_id: report_id.to_string(),
            scenario_id: scenario_id.to_string(),
            participant_id: participant_id.to_string(),
            checkpoint_id: u.checkpoint_id,
            rule_id: u.rule_id,
            position: u.position,
            captured_at: u.captured_at,
            payload: u.content,
            labels: BTreeSet::new(),
            excluded: false,
            annotation: None,
        }
    }

    /// The caption as shown after edits: an annotation replaces a photo caption.
    pub fn effective_caption(&self) -> Option<&str> {
        match &self.payload {
            ReportContent::Photo { caption, .. } => Some(self.annotation.as_deref().unwrap_or(caption)),
            _ => None,
        }
    }

    /// One-line human summary used by CSV and KML.
    pub fn summary(&self) -> String {
        match &self.payload {
            ReportContent::SensorSample { sensor, value, unit } => format!("{}={value} {unit}", sensor.as_str()),
            ReportContent::Photo { blob_ref, .. } => {
                format!("{} [{blob_ref}]", self.effective_caption().unwrap_or_default())
            }
            ReportContent::QuestionnaireAnswer { answers } => {
                let parts: Vec<String> = answers.iter().map(|a| format!("{}={}", a.node_id, a.answer)).collect();
                let mut s = parts.join(";");
                if let Some(note) = &self.annotation {
                    s.push_str(&format!(" ({note})"));
                }
                s
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    AddLabel,
    RemoveLabel,
    Exclude,
    Include,
    Annotate,
}

impl EditKind {
    pub fn needs_arg(&self) -> bool {
        matches!(self, EditKind::AddLabel | EditKind::RemoveLabel | EditKind::Annotate)
    }
}

impl FromStr for EditKind {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| DataError::MalformedEdit(format!("unknown edit kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditOp {
    pub op_id: String,
    pub at: Millis,
    pub kind: EditKind,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg: Option<String>,
}

/// Apply one edit to a view row.
pub fn apply_op(view: &mut Report, op: &EditOp) {
    let arg = op.arg.clone().unwrap_or_default();
    match op.kind {
        EditKind::AddLabel => {
            view.labels.insert(arg);
        }
        EditKind::RemoveLabel => {
            view.labels.remove(&arg);
        }
        EditKind::Exclude => view.excluded = true,
        EditKind::Include => view.excluded = false,
        EditKind::Annotate => view.annotation = Some(arg),
    }
}

/// The view obtained by replaying `edits` over `originals`. Edits whose
/// target is absent are ignored.
pub fn fold(originals: &[Report], edits: &[EditOp]) -> Vec<Report> {
    let mut view = originals.to_vec();
    for op in edits {
        if let Some(r) = view.iter_mut().find(|r| r.report_id == op.target) {
            apply_op(r, op);
        }
    }
    view
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BBox {
    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat) && (self.min_lon..=self.max_lon).contains(&p.lon)
    }

    fn is_valid(&self) -> bool {
        GeoPoint::new(self.min_lat, self.min_lon).is_valid()
            && GeoPoint::new(self.max_lat, self.max_lon).is_valid()
            && self.min_lat <= self.max_lat
            && self.min_lon <= self.max_lon
    }
}

impl FromStr for BBox {
    type Err = DataError;
    /// `min_lat,min_lon,max_lat,max_lon`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DataError::MalformedFilter(format!("bbox {s:?}"));
        let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        match v.as_slice() {
            [a, b, c, d] => Ok(BBox { min_lat: *a, min_lon: *b, max_lat: *c, max_lon: *d }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Filters {
    pub participant: Option<String>,
    pub from: Option<Millis>,
    pub to: Option<Millis>,
    pub bbox: Option<BBox>,
    pub label: Option<String>,
    #[serde(default)]
    pub include_excluded: bool,
    /// Return originals instead of the edited view.
    #[serde(default)]
    pub original: bool,
}

impl Filters {
    pub fn check(&self) -> Result<(), DataError> {
        if let (Some(a), Some(b)) = (self.from, self.to) {
            if a > b {
                return Err(DataError::MalformedFilter(format!("time range {a}..{b}")));
            }
        }
        if let Some(b) = &self.bbox {
            if !b.is_valid() {
                return Err(DataError::MalformedFilter("bbox".into()));
            }
        }
        Ok(())
    }

    pub fn matches(&self, r: &Report) -> bool {
        (self.include_excluded || !r.excluded)
            && self.participant.as_ref().is_none_or(|p| *p == r.participant_id)
            && self.from.is_none_or(|t| r.captured_at >= t)
            && self.to.is_none_or(|t| r.captured_at <= t)
            && self.bbox.as_ref().is_none_or(|b| r.position.is_some_and(|p| b.contains(&p)))
            && self.label.as_ref().is_none_or(|l| r.labels.contains(l))
    }

    /// Matching rows in ascending `captured_at`, ties in storage order.
    pub fn select(&self, rows: &[Report]) -> Vec<Report> {
        let mut out: Vec<Report> = rows.iter().filter(|r| self.matches(r)).cloned().collect();
        out.sort_by_key(|r| r.captured_at);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
    Gpx,
    Kml,
}

impl ExportFormat {
    pub fn content_type(&self) -> &'static str {
        match self {
            ExportFormat::Csv => "text/csv",
            ExportFormat::Json => "application/json",
            ExportFormat::Gpx => "application/gpx+xml",
            ExportFormat::Kml => "application/vnd.google-earth.kml+xml",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            "gpx" => Ok(ExportFormat::Gpx),
            "kml" => Ok(ExportFormat::Kml),
            other => Err(DataError::UnsupportedFormat(other.to_string())),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
            ExportFormat::Gpx => "gpx",
            ExportFormat::Kml => "kml",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("duplicate report id {0}")]
    DuplicateReport(String),
    #[error("captured_at {0} outside scenario period")]
    OutsidePeriod(Millis),
    #[error("unknown scenario {0}")]
    UnknownScenario(String),
    #[error("unknown report {0}")]
    UnknownReport(String),
    #[error("{0} is not enabled for this scenario")]
    FunctionDisabled(&'static str),
    #[error("malformed filter: {0}")]
    MalformedFilter(String),
    #[error("malformed edit: {0}")]
    MalformedEdit(String),
    #[error("unsupported export format {0:?}")]
    UnsupportedFormat(String),
    #[error("document does not match the report schema: {0}")]
    SchemaMismatch(String),
    #[error("report {report} belongs to scenario {found}")]
    ScenarioMismatch { report: String, found: String },
    #[error("storage failure: {0}")]
    Io(String),
}

impl DataError {
    pub const CODES: &'static [&'static str] = &[
        "duplicate report",
        "outside period",
        "unknown scenario",
        "unknown report",
        "function not enabled",
        "malformed filter",
        "malformed edit",
        "unsupported format",
        "schema mismatch",
        "scenario mismatch",
        "storage failure",
    ];

    pub fn code(&self) -> &'static str {
        match self {
            DataError::DuplicateReport(_) => "duplicate report",
            DataError::OutsidePeriod(_) => "outside period",
            DataError::UnknownScenario(_) => "unknown scenario",
            DataError::UnknownReport(_) => "unknown report",
            DataError::FunctionDisabled(_) => "function not enabled",
            DataError::MalformedFilter(_) => "malformed filter",
            DataError::MalformedEdit(_) => "malformed edit",
            DataError::UnsupportedFormat(_) => "unsupported format",
            DataError::SchemaMismatch(_) => "schema mismatch",
            DataError::ScenarioMismatch { .. } => "scenario mismatch",
            DataError::Io(_) => "storage failure",
        }
    }
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}
