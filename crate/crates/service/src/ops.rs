//! Operations shared by the CLI and the HTTP API. Both surfaces parse their
//! input into these requests and call the same functions, so they reach the
//! engine the same way.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use pms_core::clock::SystemClock;
use pms_core::data::{BBox, EditKind, EditSummary, ExportFormat, Filters, Report};
use pms_core::metrics::{self, PlatformDescriptor, TableRow};
use pms_core::runtime::{Engine, EngineConfig};
use pms_core::scenario::{parse_scenario, validate_scenario, Violation};
use pms_core::sim::{self, AgentProfile, Movement, SimConfig, SimResult};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::ApiError;

pub const MAX_PAGE_SIZE: usize = 1000;
pub const MAX_SIM_AGENTS: usize = 1000;

pub fn open_engine(cfg: &Config) -> Result<Engine, ApiError> {
    let config = EngineConfig { data_dir: Some(cfg.data_dir.clone()), endpoint: cfg.endpoint.clone(), id_seed: None };
    Ok(Engine::new(config, Arc::new(SystemClock))?)
}

/// Parse and check a scenario document. Parse failures are errors; rule
/// violations are returned as data, empty when the document is valid.
pub fn validate_document(text: &str) -> Result<Vec<Violation>, ApiError> {
    let s = parse_scenario(text)?;
    Ok(validate_scenario(&s))
}

/// Report filters plus paging, as they arrive on a query string or CLI flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportQuery {
    pub participant: Option<String>,
    pub from: Option<i64>,
    pub to: Option<i64>,
    /// `min_lat,min_lon,max_lat,max_lon`
    pub bbox: Option<String>,
    pub label: Option<String>,
    pub include_excluded: Option<bool>,
    pub original: Option<bool>,
    /// Zero-based.
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

impl ReportQuery {
    /// Build from query-string pairs; unknown keys are rejected.
    pub fn from_pairs(mut pairs: BTreeMap<String, String>) -> Result<Self, ApiError> {
        fn typed<T: FromStr>(pairs: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
            pairs
                .remove(key)
                .map(|v| v.parse().map_err(|_| ApiError::new("malformed filter", format!("{key}={v:?}")).at(key)))
                .transpose()
        }
        let q = ReportQuery {
            participant: pairs.remove("participant"),
            from: typed(&mut pairs, "from")?,
            to: typed(&mut pairs, "to")?,
            bbox: pairs.remove("bbox"),
            label: pairs.remove("label"),
            include_excluded: typed(&mut pairs, "include_excluded")?,
            original: typed(&mut pairs, "original")?,
            page: typed(&mut pairs, "page")?,
            page_size: typed(&mut pairs, "page_size")?,
        };
        match pairs.keys().next() {
            Some(k) => Err(ApiError::new("malformed filter", format!("unknown parameter {k:?}")).at(k.as_str())),
            None => Ok(q),
        }
    }

    pub fn filters(&self) -> Result<Filters, ApiError> {
        let bbox = self.bbox.as_deref().map(str::parse::<BBox>).transpose()?;
        let f = Filters {
            participant: self.participant.clone(),
            from: self.from,
            to: self.to,
            bbox,
            label: self.label.clone(),
            include_excluded: self.include_excluded.unwrap_or(false),
            original: self.original.unwrap_or(false),
        };
        f.check()?;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub reports: Vec<Report>,
}

pub fn query_page(engine: &Engine, sid: &str, q: &ReportQuery, default_size: usize) -> Result<Page, ApiError> {
    let page_size = q.page_size.unwrap_or(default_size);
    if page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(ApiError::new("malformed filter", format!("page_size must be in 1..={MAX_PAGE_SIZE}")).at("page_size"));
    }
    let page = q.page.unwrap_or(0);
    let rows = engine.query(sid, &q.filters()?)?;
    let total = rows.len();
    let reports = rows.into_iter().skip(page.saturating_mul(page_size)).take(page_size).collect();
    Ok(Page { total, page, page_size, reports })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub kind: EditKind,
    pub target: String,
    #[serde(default)]
    pub arg: Option<String>,
}

pub fn edit(engine: &Engine, sid: &str, req: EditRequest) -> Result<EditSummary, ApiError> {
    Ok(engine.edit(sid, req.kind, &req.target, req.arg)?)
}

pub fn export(engine: &Engine, sid: &str, format: &str, q: &ReportQuery) -> Result<(ExportFormat, Vec<u8>), ApiError> {
    let format: ExportFormat = format.parse()?;
    Ok((format, engine.export(sid, format, &q.filters()?)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimRequest {
    pub scenario_id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_agents")]
    pub agents: usize,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_tick")]
    pub tick_s: f64,
    /// Explicit agents; `agents` is ignored when given.
    #[serde(default)]
    pub profiles: Option<Vec<AgentProfile>>,
}

fn default_agents() -> usize {
    3
}

fn default_duration() -> f64 {
    600.0
}

fn default_tick() -> f64 {
    1.0
}

impl SimRequest {
    pub fn new(scenario_id: &str) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            seed: 0,
            agents: default_agents(),
            duration_s: default_duration(),
            tick_s: default_tick(),
            profiles: None,
        }
    }

    /// Without explicit profiles, even agents seek points among the
    /// checkpoints and odd ones wander.
    pub fn config(&self, has_checkpoints: bool) -> SimConfig {
        let agents = self.profiles.clone().unwrap_or_else(|| {
            (0..self.agents)
                .map(|i| {
                    if has_checkpoints && i % 2 == 0 {
                        AgentProfile { point_seeking: true, ..AgentProfile::new(&format!("agent{i}"), Movement::NearestCheckpoint) }
                    } else {
                        AgentProfile::new(&format!("agent{i}"), Movement::RandomWaypoint)
                    }
                })
                .collect()
        });
        SimConfig { seed: self.seed, tick_s: self.tick_s, duration_s: self.duration_s, agents }
    }
}

pub fn sim_run(engine: &Engine, req: &SimRequest) -> Result<SimResult, ApiError> {
    let n = req.profiles.as_ref().map_or(req.agents, Vec::len);
    if n > MAX_SIM_AGENTS {
        return Err(ApiError::new("invalid sim config", format!("at most {MAX_SIM_AGENTS} agents")).at("agents"));
    }
    let s = engine.scenario(&req.scenario_id)?;
    let cfg = req.config(!s.motivation.static_requests.is_empty());
    Ok(sim::run(engine, &req.scenario_id, &cfg)?)
}

/// The comparison table for the shipped platforms, or for a platform document.
pub fn metrics_table(document: Option<&str>) -> Result<Vec<TableRow>, ApiError> {
    let platforms: Vec<PlatformDescriptor> = match document {
        Some(text) => metrics::parse_platforms(text)?,
        None => metrics::reference_platforms(),
    };
    Ok(metrics::comparison_table(&platforms))
}
