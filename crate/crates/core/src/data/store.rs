//! Durable per-scenario datasets.
//!
//! On disk each scenario owns `data/<scenario_id>/` holding three
//! newline-delimited JSON logs: `reports.log` (originals in acceptance order),
//! `edits.log` and `participants.log`. Photo blobs are content-addressed under
//! `blobs/<sha256>`. Views are rebuilt from the logs on open.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::export::{to_csv, to_gpx, to_json, to_kml};
use super::{apply_op, fold, DataError, EditOp, ExportFormat, Filters, Report};
use crate::canonical;
use crate::clock::Millis;
use crate::scenario::{Period, ProcessingConfig, Scenario};

/// The slice of a scenario the data manager enforces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    pub period: Period,
    pub processing: ProcessingConfig,
}

impl DatasetConfig {
    pub fn for_scenario(s: &Scenario) -> Self {
        Self { name: s.name.clone(), period: s.period, processing: s.processing }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub participant_id: String,
    pub joined_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditSummary {
    pub op_id: String,
    pub log_len: usize,
    pub report: Report,
}

struct Files {
    reports: File,
    edits: File,
    participants: File,
}

struct Dataset {
    config: DatasetConfig,
    originals: Vec<Report>,
    index: HashMap<String, usize>,
    view: Vec<Report>,
    edits: Vec<EditOp>,
    participants: Vec<ParticipantRecord>,
    files: Option<Files>,
}

impl Dataset {
    fn push_original(&mut self, r: Report) {
        self.index.insert(r.report_id.clone(), self.originals.len());
        self.view.push(r.clone());
        self.originals.push(r);
    }
}

fn line_of<T: Serialize>(value: &T) -> String {
    let mut s = canonical::to_canonical_string(value).expect("log record serializes");
    s.push('\n');
    s
}

fn append(file: &mut File, line: &str) -> Result<(), DataError> {
    file.write_all(line.as_bytes())?;
    file.flush()?;
    Ok(())
}

/// Parse a newline-delimited log. A torn final line (crash mid-append) is
/// dropped; a bad line anywhere else is an error.
fn read_log<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let Ok(file) = File::open(path) else {
        return Ok(Vec::new());
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(_) if i == last => break,
            Err(e) => return Err(DataError::Io(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

/// Cut an unterminated final line so later appends start on a fresh line.
fn trim_torn_tail(path: &Path) -> Result<(), DataError> {
    let Ok(bytes) = fs::read(path) else {
        return Ok(());
    };
    if bytes.last().is_some_and(|b| *b != b'\n') {
        let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    }
    Ok(())
}

fn open_append(path: &Path) -> Result<File, DataError> {
    Ok(OpenOptions::new().create(true).append(true).open(path)?)
}

/// Report storage shared by all scenario instances.
pub struct DataStore {
    root: Option<PathBuf>,
    sets: RwLock<HashMap<String, Arc<Mutex<Dataset>>>>,
    blobs: Mutex<HashMap<String, Vec<u8>>>,
}

impl DataStore {
    /// A store that keeps everything in memory.
    pub fn in_memory() -> Self {
        Self { root: None, sets: RwLock::new(HashMap::new()), blobs: Mutex::new(HashMap::new()) }
    }

    /// A store persisted under `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, DataError> {
        let root = root.into();
        fs::create_dir_all(root.join("data"))?;
        fs::create_dir_all(root.join("blobs"))?;
        Ok(Self { root: Some(root), ..Self::in_memory() })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    fn dir(&self, sid: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join("data").join(sid))
    }

    /// Make a dataset available, loading any existing logs. Registering an
    /// already open dataset only replaces its config.
    pub fn register(&self, sid: &str, config: DatasetConfig) -> Result<(), DataError> {
        if let Some(set) = self.sets.read().get(sid) {
            set.lock().config = config;
            return Ok(());
        }
        let mut ds = Dataset {
            config,
            originals: Vec::new(),
            index: HashMap::new(),
            view: Vec::new(),
            edits: Vec::new(),
            participants: Vec::new(),
            files: None,
        };
        if let Some(dir) = self.dir(sid) {
            fs::create_dir_all(&dir)?;
            for name in ["reports.log", "edits.log", "participants.log"] {
                trim_torn_tail(&dir.join(name))?;
            }
            for r in read_log::<Report>(&dir.join("reports.log"))? {
                ds.push_original(r);
            }
            ds.edits = read_log(&dir.join("edits.log"))?;
            ds.view = fold(&ds.originals, &ds.edits);
            ds.participants = read_log(&dir.join("participants.log"))?;
            ds.files = Some(Files {
                reports: open_append(&dir.join("reports.log"))?,
                edits: open_append(&dir.join("edits.log"))?,
                participants: open_append(&dir.join("participants.log"))?,
            });
        }
        self.sets.write().insert(sid.to_string(), Arc::new(Mutex::new(ds)));
        Ok(())
    }

    /// Forget a dataset; with `purge` its files are deleted too.
    pub fn remove(&self, sid: &str, purge: bool) -> Result<bool, DataError> {
        let existed = self.sets.write().remove(sid).is_some();
        if purge {
            if let Some(dir) = self.dir(sid) {
                if dir.exists() {
                    fs::remove_dir_all(dir)?;
                }
            }
        }
        Ok(existed)
    }

    pub fn is_registered(&self, sid: &str) -> bool {
        self.sets.read().contains_key(sid)
    }

    fn set(&self, sid: &str) -> Result<Arc<Mutex<Dataset>>, DataError> {
        self.sets.read().get(sid).cloned().ok_or_else(|| DataError::UnknownScenario(sid.to_string()))
    }

    pub fn config(&self, sid: &str) -> Result<DatasetConfig, DataError> {
        Ok(self.set(sid)?.lock().config.clone())
    }

    pub fn append_report(&self, r: Report) -> Result<String, DataError> {
        let set = self.set(&r.scenario_id)?;
        let mut ds = set.lock();
        if ds.index.contains_key(&r.report_id) {
            return Err(DataError::DuplicateReport(r.report_id));
        }
        if !ds.config.period.contains(r.captured_at) {
            return Err(DataError::OutsidePeriod(r.captured_at));
        }
        if let Some(f) = ds.files.as_mut() {
            append(&mut f.reports, &line_of(&r))?;
        }
        let id = r.report_id.clone();
        ds.push_original(r);
        Ok(id)
    }

    pub fn report_count(&self, sid: &str) -> Result<usize, DataError> {
        Ok(self.set(sid)?.lock().originals.len())
    }

    /// Originals in acceptance order, unfiltered. Used for recovery.
    pub fn originals(&self, sid: &str) -> Result<Vec<Report>, DataError> {
        Ok(self.set(sid)?.lock().originals.clone())
    }

    /// The edited view in acceptance order, unfiltered.
    pub fn view(&self, sid: &str) -> Result<Vec<Report>, DataError> {
        Ok(self.set(sid)?.lock().view.clone())
    }

    pub fn get(&self, sid: &str, report_id: &str, original: bool) -> Result<Report, DataError> {
        let set = self.set(sid)?;
        let ds = set.lock();
        let i = *ds.index.get(report_id).ok_or_else(|| DataError::UnknownReport(report_id.to_string()))?;
        Ok(if original { ds.originals[i].clone() } else { ds.view[i].clone() })
    }

    fn select(&self, sid: &str, filters: &Filters) -> Result<(DatasetConfig, Vec<Report>), DataError> {
        filters.check()?;
        let set = self.set(sid)?;
        let ds = set.lock();
        let rows = if filters.original { &ds.originals } else { &ds.view };
        Ok((ds.config.clone(), filters.select(rows)))
    }

    /// Browsing query: ascending `captured_at`.
    pub fn query(&self, sid: &str, filters: &Filters) -> Result<Vec<Report>, DataError> {
        if !self.config(sid)?.processing.browsing {
            return Err(DataError::FunctionDisabled("browsing"));
        }
        Ok(self.select(sid, filters)?.1)
    }

    pub fn apply_edit(&self, sid: &str, op: EditOp) -> Result<EditSummary, DataError> {
        let set = self.set(sid)?;
        let mut ds = set.lock();
        if !ds.config.processing.editing {
            return Err(DataError::FunctionDisabled("editing"));
        }
        if op.kind.needs_arg() && op.arg.is_none() {
            return Err(DataError::MalformedEdit(format!("{:?} needs an argument", op.kind)));
        }
        let i = *ds.index.get(&op.target).ok_or_else(|| DataError::UnknownReport(op.target.clone()))?;
        if let Some(f) = ds.files.as_mut() {
            append(&mut f.edits, &line_of(&op))?;
        }
        apply_op(&mut ds.view[i], &op);
        let summary = EditSummary { op_id: op.op_id.clone(), log_len: ds.edits.len() + 1, report: ds.view[i].clone() };
        ds.edits.push(op);
        Ok(summary)
    }

    pub fn edit_log(&self, sid: &str) -> Result<Vec<EditOp>, DataError> {
        Ok(self.set(sid)?.lock().edits.clone())
    }

    /// Drop every edit; returns how many were reverted.
    pub fn restore(&self, sid: &str) -> Result<usize, DataError> {
        let set = self.set(sid)?;
        let mut ds = set.lock();
        if !ds.config.processing.editing {
            return Err(DataError::FunctionDisabled("editing"));
        }
        let n = ds.edits.len();
        if let Some(f) = ds.files.as_mut() {
            f.edits.set_len(0)?;
        }
        ds.edits.clear();
        ds.view = ds.originals.clone();
        Ok(n)
    }

    pub fn export(&self, sid: &str, format: ExportFormat, filters: &Filters) -> Result<Vec<u8>, DataError> {
        if !self.config(sid)?.processing.export {
            return Err(DataError::FunctionDisabled("export"));
        }
        let (config, rows) = self.select(sid, filters)?;
        Ok(match format {
            ExportFormat::Csv => to_csv(&rows),
            ExportFormat::Json => to_json(&rows),
            ExportFormat::Gpx => to_gpx(&config.name, &rows),
            ExportFormat::Kml => to_kml(&config.name, &rows),
        })
    }

    /// Load a JSON export. The whole document is checked before anything is
    /// stored; imported rows become originals, edits included.
    pub fn import(&self, sid: &str, json: &[u8]) -> Result<usize, DataError> {
        let rows: Vec<Report> = serde_json::from_slice(json).map_err(|e| DataError::SchemaMismatch(e.to_string()))?;
        let set = self.set(sid)?;
        let mut ds = set.lock();
        let mut seen = std::collections::HashSet::new();
        for r in &rows {
            if r.scenario_id != sid {
                return Err(DataError::ScenarioMismatch { report: r.report_id.clone(), found: r.scenario_id.clone() });
            }
            if ds.index.contains_key(&r.report_id) || !seen.insert(r.report_id.as_str()) {
                return Err(DataError::DuplicateReport(r.report_id.clone()));
            }
            if !ds.config.period.contains(r.captured_at) {
                return Err(DataError::OutsidePeriod(r.captured_at));
            }
        }
        let n = rows.len();
        for r in rows {
            if let Some(f) = ds.files.as_mut() {
                append(&mut f.reports, &line_of(&r))?;
            }
            ds.push_original(r);
        }
        Ok(n)
    }

    pub fn record_participant(&self, sid: &str, rec: ParticipantRecord) -> Result<(), DataError> {
        let set = self.set(sid)?;
        let mut ds = set.lock();
        if ds.participants.iter().any(|p| p.participant_id == rec.participant_id) {
            return Ok(());
        }
        if let Some(f) = ds.files.as_mut() {
            append(&mut f.participants, &line_of(&rec))?;
        }
        ds.participants.push(rec);
        Ok(())
    }

    pub fn participants(&self, sid: &str) -> Result<Vec<ParticipantRecord>, DataError> {
        Ok(self.set(sid)?.lock().participants.clone())
    }

    /// Store an opaque blob; returns its sha256 hex digest.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<String, DataError> {
        let hash = hex::encode(Sha256::digest(bytes));
        match &self.root {
            Some(root) => {
                let path = root.join("blobs").join(&hash);
                if !path.exists() {
                    let tmp = root.join("blobs").join(format!(".{hash}.tmp"));
                    fs::write(&tmp, bytes)?;
                    fs::rename(tmp, path)?;
                }
            }
            None => {
                self.blobs.lock().insert(hash.clone(), bytes.to_vec());
            }
        }
        Ok(hash)
    }

    pub fn get_blob(&self, hash: &str) -> Option<Vec<u8>> {
        match &self.root {
            Some(root) if hash.chars().all(|c| c.is_ascii_hexdigit()) => fs::read(root.join("blobs").join(hash)).ok(),
            Some(_) => None,
            None => self.blobs.lock().get(hash).cloned(),
        }
    }
}
