//! `pms`: the organizer command line.
//!
//! Exit status is 0 on success, 1 when the engine or the input refuses the
//! operation (the error goes to stderr with its code), 2 on a usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pms_core::metrics::format_score;
use pms_core::runtime::{Engine, InstanceStatus};
use pms_core::sim::AgentProfile;
use serde_json::{json, Value};

use crate::config::Config;
use crate::error::ApiError;
use crate::ops::{self, EditRequest, ReportQuery, SimRequest};

#[derive(Debug, Parser)]
#[command(name = "pms", version, about = "Deploy, run and inspect participatory sensing scenarios")]
pub struct Cli {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config file and PMS_DATA_DIR.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
    #[default]
    Text,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct Fmt {
    #[arg(long, value_enum, default_value_t)]
    pub format: OutFormat,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deploy and control scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Query, edit and export collected reports.
    #[command(subcommand)]
    Data(DataCmd),
    /// Simulated participants.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Platform comparison metrics.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Run the HTTP/WS service.
    Serve,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Check a scenario document without deploying it.
    Validate {
        file: PathBuf,
        #[command(flatten)]
        fmt: Fmt,
    },
    /// Validate and deploy a scenario document.
    Deploy {
        file: PathBuf,
        #[command(flatten)]
        fmt: Fmt,
    },
    /// Start a deployed or stopped scenario.
    Start {
        id: String,
        #[command(flatten)]
        fmt: Fmt,
    },
    /// Stop a running scenario.
    Stop {
        id: String,
        #[command(flatten)]
        fmt: Fmt,
    },
    /// Lifecycle state and counters.
    Status {
        id: String,
        #[command(flatten)]
        fmt: Fmt,
    },
    /// Print the deployed document.
    Show { id: String },
    /// Every deployed scenario.
    List {
        #[command(flatten)]
        fmt: Fmt,
    },
    /// Join code payload for participants.
    Joincode {
        id: String,
        #[command(flatten)]
        fmt: Fmt,
    },
    /// Delete a scenario and its data.
    Remove {
        id: String,
        #[command(flatten)]
        fmt: Fmt,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub participant: Option<String>,
    /// Epoch milliseconds, inclusive.
    #[arg(long)]
    pub from: Option<i64>,
    #[arg(long)]
    pub to: Option<i64>,
    /// min_lat,min_lon,max_lat,max_lon
    #[arg(long, allow_hyphen_values = true)]
    pub bbox: Option<String>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub include_excluded: bool,
    /// Unedited originals.
    #[arg(long)]
    pub original: bool,
}

impl FilterArgs {
    fn query(&self) -> ReportQuery {
        ReportQuery {
            participant: self.participant.clone(),
            from: self.from,
            to: self.to,
            bbox: self.bbox.clone(),
            label: self.label.clone(),
            include_excluded: Some(self.include_excluded),
            original: Some(self.original),
            page: None,
            page_size: None,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum DataCmd {
    /// Filtered, paged report view.
    Query {
        id: String,
        #[command(flatten)]
        filters: FilterArgs,
        #[arg(long)]
        page: Option<usize>,
        #[arg(long)]
        page_size: Option<usize>,
        #[command(flatten)]
        fmt: Fmt,
    },
    /// Apply add_label, remove_label, exclude, include or annotate.
    Edit {
        id: String,
        kind: String,
        target: String,
        arg: Option<String>,
        #[command(flatten)]
        fmt: Fmt,
    },
    /// Drop every edit.
    Restore {
        id: String,
        #[command(flatten)]
        fmt: Fmt,
    },
    /// Export the filtered view.
    Export {
        id: String,
        /// csv, json, gpx or kml.
        #[arg(long)]
        format: String,
        #[command(flatten)]
        filters: FilterArgs,
        /// Write here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Load a JSON export into a scenario that is not running.
    Import {
        id: String,
        file: PathBuf,
        #[command(flatten)]
        fmt: Fmt,
    },
    /// Participants ordered by points.
    Ranking {
        id: String,
        #[command(flatten)]
        fmt: Fmt,
    },
}

#[derive(Debug, Subcommand)]
pub enum SimCmd {
    /// Drive simulated participants through a running scenario.
    Run {
        id: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        agents: usize,
        /// Seconds of simulated time.
        #[arg(long, default_value_t = 600.0)]
        duration: f64,
        #[arg(long, default_value_t = 1.0)]
        tick: f64,
        /// JSON array of agent profiles; replaces --agents.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Write the trajectory CSV here.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[command(flatten)]
        fmt: Fmt,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    Platforms,
}

#[derive(Debug, Subcommand)]
pub enum MetricsCmd {
    /// Preparation workload and function score per platform.
    Table {
        /// Shipped platform data (the default).
        #[arg(long, value_enum, conflicts_with = "file")]
        fixture: Option<Fixture>,
        /// Platform document to score instead.
        #[arg(long)]
        file: Option<PathBuf>,
        #[command(flatten)]
        fmt: Fmt,
    },
}

impl Command {
    fn format(&self) -> OutFormat {
        let fmt = match self {
            Command::Scenario(c) => match c {
                ScenarioCmd::Validate { fmt, .. }
                | ScenarioCmd::Deploy { fmt, .. }
                | ScenarioCmd::Start { fmt, .. }
                | ScenarioCmd::Stop { fmt, .. }
                | ScenarioCmd::Status { fmt, .. }
                | ScenarioCmd::List { fmt }
                | ScenarioCmd::Joincode { fmt, .. }
                | ScenarioCmd::Remove { fmt, .. } => Some(fmt),
                ScenarioCmd::Show { .. } => None,
            },
            Command::Data(c) => match c {
                DataCmd::Query { fmt, .. }
                | DataCmd::Edit { fmt, .. }
                | DataCmd::Restore { fmt, .. }
                | DataCmd::Import { fmt, .. }
                | DataCmd::Ranking { fmt, .. } => Some(fmt),
                DataCmd::Export { .. } => None,
            },
            Command::Sim(SimCmd::Run { fmt, .. }) | Command::Metrics(MetricsCmd::Table { fmt, .. }) => Some(fmt),
            Command::Serve => None,
        };
        fmt.map_or(OutFormat::Text, |f| f.format)
    }
}

/// What a verb produced, rendered according to `--format`.
pub enum Output {
    /// Flat key/value record.
    Record(Value),
    Table { header: Vec<&'static str>, rows: Vec<Vec<String>>, json: Value },
    Bytes(Vec<u8>),
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn write_csv(out: &mut dyn Write, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

impl Output {
    pub fn render(&self, format: OutFormat, out: &mut dyn Write) -> std::io::Result<()> {
        match (self, format) {
            (Output::Bytes(b), _) => out.write_all(b),
            (Output::Record(v), OutFormat::Json) | (Output::Table { json: v, .. }, OutFormat::Json) => {
                writeln!(out, "{}", serde_json::to_string_pretty(v).expect("values serialize"))
            }
            (Output::Record(v), OutFormat::Csv) => {
                let map = v.as_object().cloned().unwrap_or_default();
                let header: Vec<&str> = map.keys().map(String::as_str).collect();
                write_csv(out, &header, &[map.values().map(cell).collect()])
            }
            (Output::Record(v), OutFormat::Text) => {
                for (k, val) in v.as_object().cloned().unwrap_or_default() {
                    writeln!(out, "{k}: {}", cell(&val))?;
                }
                Ok(())
            }
            (Output::Table { header, rows, .. }, OutFormat::Csv) => write_csv(out, header, rows),
            (Output::Table { header, rows, .. }, OutFormat::Text) => {
                let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
                for r in rows {
                    for (w, c) in widths.iter_mut().zip(r) {
                        *w = (*w).max(c.chars().count());
                    }
                }
                let line = |cells: Vec<&str>| {
                    let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                    padded.join("  ").trim_end().to_string()
                };
                writeln!(out, "{}", line(header.clone()))?;
                for r in rows {
                    writeln!(out, "{}", line(r.iter().map(String::as_str).collect()))?;
                }
                Ok(())
            }
        }
    }
}

pub fn render_error(e: &ApiError, format: OutFormat, err: &mut dyn Write) {
    let _ = match format {
        OutFormat::Json => writeln!(err, "{}", serde_json::to_string(e).expect("errors serialize")),
        _ => {
            let _ = writeln!(err, "error: {e}");
            e.details.iter().try_for_each(|d| writeln!(err, "  {d}"))
        }
    };
}

/// Parse `args` (program name first), run the verb, and return the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                2
            } else {
                let _ = out.write_all(text.as_bytes());
                0
            };
        }
    };
    let format = cli.command.format();
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            render_error(&e, format, err);
            1
        }
    }
}

fn read(path: &Path) -> Result<String, ApiError> {
    std::fs::read_to_string(path).map_err(|e| ApiError::new("unreadable file", format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ApiError> {
    std::fs::write(path, bytes).map_err(|e| ApiError::new("storage failure", format!("{}: {e}", path.display())))
}

fn status_record(sid: &str, s: &InstanceStatus) -> Output {
    Output::Record(json!({ "scenario_id": sid, "state": s.state.as_str(), "since": s.since, "restarts": s.restarts }))
}

pub fn resolve_config(cli: &Cli) -> Result<Config, ApiError> {
    let mut cfg = Config::from_env(cli.config.as_deref())?;
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    Ok(cfg)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), ApiError> {
    let cfg = resolve_config(&cli)?;
    let format = cli.command.format();
    let engine = || ops::open_engine(&cfg);
    let output = match cli.command {
        Command::Scenario(c) => scenario(c, engine)?,
        Command::Data(c) => data(c, &engine()?, &cfg)?,
        Command::Sim(SimCmd::Run { id, seed, agents, duration, tick, profiles, trajectory, .. }) => {
            let profiles = match profiles {
                Some(p) => Some(
                    serde_json::from_str::<Vec<AgentProfile>>(&read(&p)?)
                        .map_err(|e| ApiError::new("invalid sim config", e.to_string()).at(p.display().to_string()))?,
                ),
                None => None,
            };
            let req = SimRequest { scenario_id: id.clone(), seed, agents, duration_s: duration, tick_s: tick, profiles };
            let r = ops::sim_run(&engine()?, &req)?;
            if let Some(path) = trajectory {
                write_file(&path, r.trajectory_csv.as_bytes())?;
            }
            let accepted: u64 = r.uploads.values().sum();
            Output::Record(json!({
                "scenario_id": id,
                "seed": seed,
                "agents": r.agents.len(),
                "coverage": r.coverage,
                "emitted": r.emitted,
                "rejected": r.rejected,
                "checkpoint_uploads": accepted,
            }))
        }
        Command::Metrics(MetricsCmd::Table { file, .. }) => {
            let doc = file.as_deref().map(read).transpose()?;
            let rows = ops::metrics_table(doc.as_deref())?;
            Output::Table {
                header: vec!["name", "w1", "w2", "w3", "w4", "w5", "W", "S", "open_ended_w1"],
                rows: rows
                    .iter()
                    .map(|r| {
                        let mut rec = vec![r.name.clone()];
                        rec.extend(r.w.iter().map(u32::to_string));
                        rec.extend([r.workload.to_string(), format_score(r.score), r.open_ended_w1.to_string()]);
                        rec
                    })
                    .collect(),
                json: serde_json::to_value(&rows).expect("rows serialize"),
            }
        }
        Command::Serve => {
            crate::http::serve_blocking(cfg, out)?;
            return Ok(());
        }
    };
    output.render(format, out).map_err(|e| ApiError::new("internal error", e.to_string()))
}

fn scenario(c: ScenarioCmd, engine: impl Fn() -> Result<Engine, ApiError>) -> Result<Output, ApiError> {
    Ok(match c {
        ScenarioCmd::Validate { file, .. } => {
            let text = read(&file)?;
            let violations = ops::validate_document(&text)?;
            if !violations.is_empty() {
                return Err(pms_core::runtime::EngineError::Invalid(violations).into());
            }
            Output::Record(json!({ "valid": true }))
        }
        ScenarioCmd::Deploy { file, .. } => {
            let e = engine()?;
            let sid = e.deploy_document(&read(&file)?)?;
            status_record(&sid, &e.status(&sid)?)
        }
        ScenarioCmd::Start { id, .. } => status_record(&id, &engine()?.start(&id)?),
        ScenarioCmd::Stop { id, .. } => status_record(&id, &engine()?.stop(&id)?),
        ScenarioCmd::Status { id, .. } => status_record(&id, &engine()?.status(&id)?),
        ScenarioCmd::Show { id } => {
            let s = engine()?.scenario(&id)?;
            Output::Bytes(format!("{}\n", serde_json::to_string_pretty(&s).expect("scenario serializes")).into_bytes())
        }
        ScenarioCmd::List { .. } => {
            let list = engine()?.list();
            Output::Table {
                header: vec!["scenario_id", "name", "state", "restarts", "participants", "reports"],
                rows: list
                    .iter()
                    .map(|i| {
                        vec![
                            i.scenario_id.clone(),
                            i.name.clone(),
                            i.status.state.as_str().to_string(),
                            i.status.restarts.to_string(),
                            i.participants.to_string(),
                            i.reports.to_string(),
                        ]
                    })
                    .collect(),
                json: serde_json::to_value(&list).expect("summaries serialize"),
            }
        }
        ScenarioCmd::Joincode { id, .. } => {
            let code = engine()?.joincode(&id)?;
            Output::Record(json!({ "scenario_id": id, "payload": code.payload }))
        }
        ScenarioCmd::Remove { id, .. } => {
            engine()?.remove(&id)?;
            Output::Record(json!({ "scenario_id": id, "removed": true }))
        }
    })
}

fn data(c: DataCmd, engine: &Engine, cfg: &Config) -> Result<Output, ApiError> {
    Ok(match c {
        DataCmd::Query { id, filters, page, page_size, .. } => {
            let q = ReportQuery { page, page_size, ..filters.query() };
            let p = ops::query_page(engine, &id, &q, cfg.page_size)?;
            Output::Table {
                header: vec!["report_id", "participant_id", "captured_at", "kind", "lat", "lon", "labels", "excluded", "summary"],
                rows: p
                    .reports
                    .iter()
                    .map(|r| {
                        let kind = serde_json::to_value(&r.payload).expect("reports serialize")["kind"].clone();
                        vec![
                            r.report_id.clone(),
                            r.participant_id.clone(),
                            r.captured_at.to_string(),
                            cell(&kind),
                            r.position.map(|p| p.lat.to_string()).unwrap_or_default(),
                            r.position.map(|p| p.lon.to_string()).unwrap_or_default(),
                            r.labels.iter().cloned().collect::<Vec<_>>().join(";"),
                            r.excluded.to_string(),
                            r.summary(),
                        ]
                    })
                    .collect(),
                json: serde_json::to_value(&p).expect("pages serialize"),
            }
        }
        DataCmd::Edit { id, kind, target, arg, .. } => {
            let kind = kind.parse()?;
            let s = ops::edit(engine, &id, EditRequest { kind, target, arg })?;
            Output::Record(json!({ "op_id": s.op_id, "report_id": s.report.report_id, "log_len": s.log_len }))
        }
        DataCmd::Restore { id, .. } => Output::Record(json!({ "scenario_id": id, "reverted": engine.restore(&id)? })),
        DataCmd::Export { id, format, filters, output } => {
            let (_, bytes) = ops::export(engine, &id, &format, &filters.query())?;
            match output {
                Some(path) => {
                    write_file(&path, &bytes)?;
                    Output::Bytes(Vec::new())
                }
                None => Output::Bytes(bytes),
            }
        }
        DataCmd::Import { id, file, .. } => {
            let bytes = std::fs::read(&file)
                .map_err(|e| ApiError::new("unreadable file", format!("{}: {e}", file.display())))?;
            Output::Record(json!({ "scenario_id": id, "imported": engine.import(&id, &bytes)? }))
        }
        DataCmd::Ranking { id, .. } => {
            let rows = engine.ranking(&id)?;
            Output::Table {
                header: vec!["rank", "participant_id", "points"],
                rows: rows.iter().map(|r| vec![r.rank.to_string(), r.participant_id.clone(), r.points.to_string()]).collect(),
                json: serde_json::to_value(&rows).expect("ranking serializes"),
            }
        }
    })
}
