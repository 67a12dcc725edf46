//! Preparation workload (W) and function score (S) for sensing platforms.
//!
//! ```
//! use pms_core::metrics::{comparison_table, reference_platforms};
//!
//! let rows = comparison_table(&reference_platforms());
//! let last = rows.last().unwrap();
//! assert_eq!((last.name.as_str(), last.workload, last.score), ("ParmoSense", 5, 8.0));
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::Function;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionStatus {
    None,
    Partial,
    Full,
}

impl FunctionStatus {
    /// Contribution in half points.
    fn halves(self) -> u32 {
        match self {
            FunctionStatus::None => 0,
            FunctionStatus::Partial => 1,
            FunctionStatus::Full => 2,
        }
    }

    pub fn value(self) -> f64 {
        self.halves() as f64 / 2.0
    }

    pub fn upgrade(self) -> Option<Self> {
        match self {
            FunctionStatus::None => Some(FunctionStatus::Partial),
            FunctionStatus::Partial => Some(FunctionStatus::Full),
            FunctionStatus::Full => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workloads {
    pub w1: u32,
    pub w2: u32,
    pub w3: u32,
    pub w4: u32,
    pub w5: u32,
}

impl Workloads {
    pub const ALLOWED: [&'static [u32]; 5] = [&[0, 8], &[0, 4], &[0, 8], &[0, 1, 2], &[0, 2]];

    pub fn as_array(&self) -> [u32; 5] {
        [self.w1, self.w2, self.w3, self.w4, self.w5]
    }
}

/// One platform: support level of F1..F8 and the sub-task workloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformDescriptor {
    pub name: String,
    pub statuses: [FunctionStatus; 8],
    pub workloads: Workloads,
    /// w1 is printed as a fixed number but needs extra development time on top.
    #[serde(default)]
    pub open_ended_w1: bool,
}

impl PlatformDescriptor {
    pub fn status(&self, f: Function) -> FunctionStatus {
        let i = Function::ALL.iter().position(|g| *g == f).expect("every function is listed");
        self.statuses[i]
    }

    pub fn check(&self) -> Result<(), MetricsError> {
        for (i, (w, allowed)) in self.workloads.as_array().iter().zip(Workloads::ALLOWED).enumerate() {
            if !allowed.contains(w) {
                return Err(MetricsError::Workload { platform: self.name.clone(), index: i + 1, value: *w });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{platform}: w{index} = {value} is not an allowed value")]
    Workload { platform: String, index: usize, value: u32 },
    #[error("malformed platform document: {0}")]
    Malformed(String),
}

impl MetricsError {
    pub const CODES: &'static [&'static str] = &["invalid workload", "malformed platform document"];

    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::Workload { .. } => "invalid workload",
            MetricsError::Malformed(_) => "malformed platform document",
        }
    }
}

pub fn function_score(d: &PlatformDescriptor) -> f64 {
    d.statuses.iter().map(|s| s.halves()).sum::<u32>() as f64 / 2.0
}

pub fn preparation_workload(d: &PlatformDescriptor) -> u32 {
    d.workloads.as_array().iter().sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub w: [u32; 5],
    pub workload: u32,
    pub score: f64,
    pub open_ended_w1: bool,
}

pub fn comparison_table(descriptors: &[PlatformDescriptor]) -> Vec<TableRow> {
    descriptors
        .iter()
        .map(|d| TableRow {
            name: d.name.clone(),
            w: d.workloads.as_array(),
            workload: preparation_workload(d),
            score: function_score(d),
            open_ended_w1: d.open_ended_w1,
        })
        .collect()
}

/// Scores are multiples of 0.5, printed without trailing zeros: `4.5`, `8`.
pub fn format_score(s: f64) -> String {
    if s.fract() == 0.0 {
        format!("{}", s as i64)
    } else {
        format!("{s:.1}")
    }
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(["name", "w1", "w2", "w3", "w4", "w5", "W", "S", "open_ended_w1"]).expect("in-memory write");
    for r in rows {
        let mut rec = vec![r.name.clone()];
        rec.extend(r.w.iter().map(u32::to_string));
        rec.push(r.workload.to_string());
        rec.push(format_score(r.score));
        rec.push(r.open_ended_w1.to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlatformDocument {
    schema_version: u32,
    platforms: Vec<PlatformDescriptor>,
}

pub fn parse_platforms(text: &str) -> Result<Vec<PlatformDescriptor>, MetricsError> {
    let doc: PlatformDocument = serde_json::from_str(text).map_err(|e| MetricsError::Malformed(e.to_string()))?;
    if doc.schema_version != 1 {
        return Err(MetricsError::Malformed(format!("schema_version {} is not supported", doc.schema_version)));
    }
    for d in &doc.platforms {
        d.check()?;
    }
    Ok(doc.platforms)
}

pub const REFERENCE_PLATFORMS_JSON: &str = include_str!("../fixtures/platforms.json");

/// The ten platforms of the published comparison, in table order.
pub fn reference_platforms() -> Vec<PlatformDescriptor> {
    parse_platforms(REFERENCE_PLATFORMS_JSON).expect("shipped fixture is valid")
}
