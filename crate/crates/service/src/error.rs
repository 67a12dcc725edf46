//! The error shape shared by the CLI and the HTTP API, and the catalogue of
//! every code it can carry.
//!
//! Every code an engine error can produce is listed:
//!
//! ```
//! use pms_core::metrics::MetricsError;
//! use pms_core::runtime::EngineError;
//! use pms_core::scenario::{codes, JoinCodeError, ScenarioError};
//! use pms_core::data::DataError;
//! use pms_core::sim::SimError;
//! use pms_service::error::{lookup, CATALOGUE, SERVICE_CODES};
//!
//! let sources = [
//!     EngineError::CODES,
//!     ScenarioError::CODES,
//!     codes::ALL,
//!     DataError::CODES,
//!     JoinCodeError::CODES,
//!     SimError::CODES,
//!     MetricsError::CODES,
//!     SERVICE_CODES,
//! ];
//! let all: Vec<&str> = sources.concat();
//! for code in &all {
//!     assert!(lookup(code).is_some(), "{code} is not catalogued");
//! }
//! for entry in CATALOGUE {
//!     assert!(all.contains(&entry.code), "{} is catalogued but never produced", entry.code);
//! }
//! ```

use std::fmt;

use pms_core::data::DataError;
use pms_core::metrics::MetricsError;
use pms_core::runtime::EngineError;
use pms_core::scenario::{JoinCodeError, ScenarioError, Violation};
use pms_core::sim::SimError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    /// Offending field in the request document, when there is one.
    pub path: Option<String>,
    /// Every violation when a document breaks several rules.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<ApiError>,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.to_string(), message: message.into(), path: None, details: Vec::new() }
    }

    pub fn at(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("bad request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new("not found", message)
    }

    /// HTTP status for this code; 500 for anything uncatalogued.
    pub fn status(&self) -> u16 {
        lookup(&self.code).map_or(500, |e| e.status)
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)?;
        if let Some(p) = &self.path {
            write!(f, " (at {p})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ApiError {}

impl From<&Violation> for ApiError {
    fn from(v: &Violation) -> Self {
        ApiError::new(&v.code, format!("{} at {}", v.code, v.path)).at(&v.path)
    }
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        let path = match &e {
            ScenarioError::Syntax { line, column, .. }
            | ScenarioError::UnknownField { line, column, .. }
            | ScenarioError::MissingField { line, column, .. }
            | ScenarioError::InvalidValue { line, column, .. } => Some(format!("line {line}, column {column}")),
            ScenarioError::UnsupportedVersion(_) => Some("schema_version".to_string()),
            ScenarioError::Structure { path, .. } => Some(path.clone()),
        };
        ApiError { path, ..ApiError::new(e.code(), e.to_string()) }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Parse(p) => p.into(),
            EngineError::Invalid(vs) => {
                let mut out = ApiError::new("invalid scenario", format!("scenario has {} violation(s)", vs.len()));
                out.path = vs.first().map(|v| v.path.clone());
                out.details = vs.iter().map(ApiError::from).collect();
                out
            }
            other => ApiError::new(other.code(), other.to_string()),
        }
    }
}

impl From<DataError> for ApiError {
    fn from(e: DataError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<JoinCodeError> for ApiError {
    fn from(e: JoinCodeError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Engine(e) => e.into(),
            other => ApiError::new(other.code(), other.to_string()),
        }
    }
}

impl From<MetricsError> for ApiError {
    fn from(e: MetricsError) -> Self {
        let path = match &e {
            MetricsError::Workload { platform, index, .. } => Some(format!("{platform}.w{index}")),
            MetricsError::Malformed(_) => None,
        };
        ApiError { path, ..ApiError::new(e.code(), e.to_string()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeInfo {
    pub code: &'static str,
    pub status: u16,
    pub description: &'static str,
}

/// Codes raised by the service itself rather than the engine.
pub const SERVICE_CODES: &[&str] =
    &["bad request", "not found", "unauthorized", "invalid config", "unreadable file", "internal error"];

const fn c(code: &'static str, status: u16, description: &'static str) -> CodeInfo {
    CodeInfo { code, status, description }
}

pub const CATALOGUE: &[CodeInfo] = &[
    // scenario documents
    c("syntax error", 400, "The document is not valid JSON."),
    c("unknown field", 400, "The document has a field the schema does not define."),
    c("missing field", 400, "A required field is absent."),
    c("invalid value", 400, "A field has the wrong type or an out-of-range value."),
    c("unsupported schema version", 400, "schema_version is not 1."),
    c("invalid identifier", 400, "An id is empty, longer than 128 bytes, or contains /, #, + or whitespace."),
    c("invalid coordinate", 400, "A latitude or longitude is out of range."),
    c("invalid radius", 400, "A geofence radius is not positive."),
    c("empty period", 400, "The scenario period does not end after it starts."),
    c("interval below minimum", 400, "A sensing interval is below the minimum."),
    c("duplicate checkpoint id", 400, "Two checkpoints share an id."),
    c("checkpoint outside area", 400, "A checkpoint fence is not inside the scenario area."),
    c("invalid contribution limit", 400, "A contribution limit is zero."),
    c("duplicate rule id", 400, "Two dynamic rules share an id."),
    c("sensor not enabled", 400, "A task asks for a sensor the scenario does not enable."),
    c("weighting requires points", 400, "Demand weighting is on but points are off."),
    c("alpha out of range", 400, "The weighting alpha is outside [0, 10]."),
    c("invalid level threshold", 400, "The level threshold is zero."),
    c("duplicate coupon id", 400, "Two coupons share an id."),
    c("invalid coupon threshold", 400, "A coupon threshold is zero."),
    c("unknown checkpoint", 400, "A reference names a checkpoint that does not exist."),
    c("empty questionnaire", 400, "A questionnaire has no nodes."),
    c("duplicate questionnaire node", 400, "Two questionnaire nodes share an id."),
    c("unknown questionnaire node", 400, "An edge or entry names a node that does not exist."),
    c("unreachable questionnaire node", 400, "A node cannot be reached from the entry."),
    c("cycle in questionnaire graph", 400, "The questionnaire graph has a cycle."),
    c("options exceed 4", 400, "A choice question has more than four options."),
    c("choice without options", 400, "A choice question has no options."),
    c("options on non-choice node", 400, "A question that is not a choice lists options."),
    c("invalid answer key", 400, "A branch key is not a valid answer for its node."),
    c("invalid scenario", 400, "The scenario breaks one or more rules; see details."),
    // lifecycle and participants
    c("duplicate scenario", 409, "A scenario with this id is already deployed."),
    c("unknown scenario", 404, "No scenario with this id."),
    c("illegal transition", 409, "The lifecycle does not allow this operation in the current state."),
    c("scenario stopped", 409, "The scenario is not running."),
    c("invalid token", 400, "The join token was not issued for this scenario."),
    c("token consumed", 409, "The join token was already used."),
    c("unknown participant", 404, "No participant with this id in the scenario."),
    c("function not enabled", 409, "The scenario does not enable this function."),
    c("publish failed", 500, "The message plane refused an envelope."),
    c("storage failure", 500, "Reading or writing the data directory failed."),
    c("invalid endpoint", 400, "The broker endpoint is not a host or host:port."),
    c("malformed join code", 400, "The join code does not follow the expected form."),
    // data
    c("duplicate report", 409, "A report with this id already exists."),
    c("outside period", 400, "captured_at is outside the scenario period."),
    c("unknown report", 404, "No report with this id."),
    c("malformed filter", 400, "A query filter is malformed."),
    c("malformed edit", 400, "An edit is malformed or lacks its argument."),
    c("unsupported format", 400, "The export format is not csv, json, gpx or kml."),
    c("schema mismatch", 400, "An imported document does not match the report schema."),
    c("scenario mismatch", 400, "An imported report belongs to another scenario."),
    // simulation and metrics
    c("invalid sim config", 400, "The simulation config is out of range."),
    c("invalid workload", 400, "A workload value is not one of the allowed values."),
    c("malformed platform document", 400, "The platform document cannot be read."),
    // service
    c("bad request", 400, "The request body or query string cannot be read."),
    c("not found", 404, "No such route."),
    c("unauthorized", 401, "The bearer token is missing or wrong."),
    c("invalid config", 400, "The service configuration is invalid."),
    c("unreadable file", 400, "An input file cannot be read."),
    c("internal error", 500, "An unexpected failure inside the service."),
];

pub fn lookup(code: &str) -> Option<&'static CodeInfo> {
    CATALOGUE.iter().find(|e| e.code == code)
}
