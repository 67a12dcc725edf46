//! Scenario manager and scenario instances.
//!
//! Each deployed scenario gets one [`Instance`](instance) with its own task
//! board, ledgers and dedup window. Uploads for an instance are handled one at
//! a time under its lock; different instances never share mutable state.
//!
//! Message handling is pull-based: [`Engine::pump`] drains every running
//! instance's uplink subscription, then answers uploads addressed to
//! instances that are not running.

mod instance;
mod status;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical;
use crate::clock::{Clock, Millis, SystemClock};
use crate::data::{DataError, DataStore, DatasetConfig, EditKind, EditOp, EditSummary, ExportFormat, Filters, ParticipantRecord, Report};
use crate::ids::IdGen;
use crate::motivation::{build_feedback, ranking, Audience, Feedback, FeedbackEvent, ParticipantState, RankEntry, TaskBoard};
use crate::plane::{Body, Broker, Envelope, PublishError, StatusNotice, Subscription, Topic};
use crate::scenario::{
    decode_join_code, generate_join_code_with, parse_scenario, validate_scenario, Checkpoint, JoinCode, JoinCodeError,
    Scenario, ScenarioError, Violation,
};

use instance::Instance;
pub use instance::{answers_follow_graph, reject};
pub use status::{next_phase, InstanceStatus, Phase, Transition};

/// Failures tolerated inside the window before the supervisor gives up.
pub const MAX_FAILURES: usize = 3;
pub const FAILURE_WINDOW_MS: Millis = 60_000;

const MANAGER_PUBLISHER: &str = "manager";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Persist scenarios and data here; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    /// Broker authority written into join codes.
    pub endpoint: String,
    /// Seed for reproducible ids; `None` draws random ids.
    pub id_seed: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { data_dir: None, endpoint: "localhost:1883".into(), id_seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("{0}")]
    Parse(#[from] ScenarioError),
    #[error("scenario has {} violation(s)", .0.len())]
    Invalid(Vec<Violation>),
    #[error("scenario {0} is already deployed")]
    Duplicate(String),
    #[error("unknown scenario {0}")]
    Unknown(String),
    #[error("cannot {op:?} a {from:?} instance")]
    IllegalTransition { from: Phase, op: Transition },
    #[error("scenario {0} is not running")]
    NotRunning(String),
    #[error("invalid join token")]
    InvalidToken,
    #[error("join token already used")]
    TokenConsumed,
    #[error("unknown participant {0}")]
    UnknownParticipant(String),
    #[error("{0} is not enabled for this scenario")]
    FunctionDisabled(&'static str),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    JoinCode(#[from] JoinCodeError),
    #[error(transparent)]
    Publish(#[from] PublishError),
    #[error("storage failure: {0}")]
    Storage(String),
}

impl EngineError {
    /// Codes of its own; wrapped errors delegate to theirs.
    pub const CODES: &'static [&'static str] = &[
        "invalid scenario",
        "duplicate scenario",
        "unknown scenario",
        "illegal transition",
        "scenario stopped",
        "invalid token",
        "token consumed",
        "unknown participant",
        "function not enabled",
        "publish failed",
        "storage failure",
    ];

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Parse(e) => e.code(),
            EngineError::Invalid(_) => "invalid scenario",
            EngineError::Duplicate(_) => "duplicate scenario",
            EngineError::Unknown(_) => "unknown scenario",
            EngineError::IllegalTransition { .. } => "illegal transition",
            EngineError::NotRunning(_) => "scenario stopped",
            EngineError::InvalidToken => "invalid token",
            EngineError::TokenConsumed => "token consumed",
            EngineError::UnknownParticipant(_) => "unknown participant",
            EngineError::FunctionDisabled(_) => "function not enabled",
            EngineError::Data(e) => e.code(),
            EngineError::JoinCode(e) => e.code(),
            EngineError::Publish(_) => "publish failed",
            EngineError::Storage(_) => "storage failure",
        }
    }
}

impl From<std::io::Error> for EngineError {
    fn from(e: std::io::Error) -> Self {
        EngineError::Storage(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisorAction {
    Restart,
    GiveUp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub scenario_id: String,
    pub name: String,
    pub status: InstanceStatus,
    pub participants: usize,
    pub reports: usize,
}

/// What a participant receives on joining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinAck {
    pub participant_id: String,
    pub scenario: Scenario,
    pub tasks: Vec<Checkpoint>,
    pub state: ParticipantState,
}

struct TokenEntry {
    scenario_id: String,
    consumed: bool,
}

type Slot = Arc<Mutex<Instance>>;

pub struct Engine {
    config: EngineConfig,
    clock: Arc<dyn Clock>,
    ids: IdGen,
    broker: Broker,
    data: DataStore,
    instances: RwLock<BTreeMap<String, Slot>>,
    tokens: Mutex<HashMap<String, TokenEntry>>,
    gateway: Mutex<Subscription>,
    manager_seq: AtomicU64,
}

impl Engine {
    /// An in-memory engine on the system clock with random ids.
    pub fn in_memory() -> Self {
        Self::new(EngineConfig::default(), Arc::new(SystemClock)).expect("in-memory engine never touches storage")
    }

    /// Build an engine, reloading every persisted scenario under `data_dir`.
    pub fn new(config: EngineConfig, clock: Arc<dyn Clock>) -> Result<Self, EngineError> {
        let broker = Broker::new();
        let gateway = broker.subscribe("pms/+/up/+").expect("static pattern");
        let data = match &config.data_dir {
            Some(dir) => DataStore::open(dir)?,
            None => DataStore::in_memory(),
        };
        let ids = config.id_seed.map(IdGen::seeded).unwrap_or_default();
        let engine = Self {
            config,
            clock,
            ids,
            broker,
            data,
            instances: RwLock::new(BTreeMap::new()),
            tokens: Mutex::new(HashMap::new()),
            gateway: Mutex::new(gateway),
            manager_seq: AtomicU64::new(0),
        };
        engine.reload()?;
        Ok(engine)
    }

    pub fn broker(&self) -> &Broker {
        &self.broker
    }

    pub fn data(&self) -> &DataStore {
        &self.data
    }

    pub fn now(&self) -> Millis {
        self.clock.now_ms()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    fn scenario_dir(&self, sid: &str) -> Option<PathBuf> {
        self.config.data_dir.as_ref().map(|d| d.join("scenarios").join(sid))
    }

    fn persist_status(&self, inst: &Instance) -> Result<(), EngineError> {
        if let Some(dir) = self.scenario_dir(inst.id()) {
            let text = canonical::to_canonical_string(&inst.status).expect("status serializes");
            let tmp = dir.join(".status.json.tmp");
            fs::write(&tmp, text)?;
            fs::rename(tmp, dir.join("status.json"))?;
        }
        Ok(())
    }

    fn reload(&self) -> Result<(), EngineError> {
        let Some(root) = self.config.data_dir.as_ref().map(|d| d.join("scenarios")) else {
            return Ok(());
        };
        fs::create_dir_all(&root)?;
        let mut dirs: Vec<PathBuf> = fs::read_dir(&root)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        dirs.sort();
        for dir in dirs {
            let Ok(text) = fs::read_to_string(dir.join("scenario.json")) else { continue };
            let scenario = parse_scenario(&text)?;
            let status = fs::read_to_string(dir.join("status.json"))
                .ok()
                .and_then(|t| serde_json::from_str::<InstanceStatus>(&t).ok())
                .unwrap_or_else(|| InstanceStatus::created(self.now()));
            let sid = scenario.scenario_id.clone();
            self.data.register(&sid, DatasetConfig::for_scenario(&scenario))?;
            let mut inst = Instance::new(scenario, status);
            if status.state != Phase::Failed {
                self.recover(&mut inst)?;
            }
            if status.state == Phase::Running {
                inst.sub = Some(self.subscribe_uplinks(&sid));
            }
            self.instances.write().insert(sid, Arc::new(Mutex::new(inst)));
        }
        Ok(())
    }

    fn recover(&self, inst: &mut Instance) -> Result<(), EngineError> {
        let participants = self.data.participants(inst.id())?;
        let reports = self.data.originals(inst.id())?;
        inst.replay(participants.iter().map(|p| p.participant_id.as_str()), &reports);
        Ok(())
    }

    fn subscribe_uplinks(&self, sid: &str) -> Subscription {
        self.broker.subscribe(&format!("pms/{sid}/up/+")).expect("scenario ids are valid topic segments")
    }

    fn slot(&self, sid: &str) -> Result<Slot, EngineError> {
        self.instances.read().get(sid).cloned().ok_or_else(|| EngineError::Unknown(sid.to_string()))
    }

    fn slots(&self) -> Vec<Slot> {
        self.instances.read().values().cloned().collect()
    }

    /// Validate and deploy a scenario document.
    pub fn deploy_document(&self, text: &str) -> Result<String, EngineError> {
        self.deploy(parse_scenario(text)?)
    }

    pub fn deploy(&self, s: Scenario) -> Result<String, EngineError> {
        let violations = validate_scenario(&s);
        if !violations.is_empty() {
            return Err(EngineError::Invalid(violations));
        }
        let sid = s.scenario_id.clone();
        let mut instances = self.instances.write();
        if instances.contains_key(&sid) {
            return Err(EngineError::Duplicate(sid));
        }
        if let Some(dir) = self.scenario_dir(&sid) {
            if dir.join("scenario.json").exists() {
                return Err(EngineError::Duplicate(sid));
            }
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("scenario.json"), s.to_canonical())?;
        }
        self.data.register(&sid, DatasetConfig::for_scenario(&s))?;
        let inst = Instance::new(s, InstanceStatus::created(self.now()));
        self.persist_status(&inst)?;
        instances.insert(sid.clone(), Arc::new(Mutex::new(inst)));
        Ok(sid)
    }

    /// Delete a scenario that is not running, together with its data.
    pub fn remove(&self, sid: &str) -> Result<(), EngineError> {
        let slot = self.slot(sid)?;
        let inst = slot.lock();
        if inst.status.state == Phase::Running {
            return Err(EngineError::IllegalTransition { from: Phase::Running, op: Transition::Stop });
        }
        drop(inst);
        self.instances.write().remove(sid);
        self.data.remove(sid, true)?;
        if let Some(dir) = self.scenario_dir(sid) {
            if dir.exists() {
                fs::remove_dir_all(dir)?;
            }
        }
        self.tokens.lock().retain(|_, t| t.scenario_id != sid);
        Ok(())
    }

    fn transition(&self, inst: &mut Instance, t: Transition) -> Result<(), EngineError> {
        let from = inst.status.state;
        let to = next_phase(from, t).ok_or(EngineError::IllegalTransition { from, op: t })?;
        inst.status.state = to;
        inst.status.since = self.now();
        Ok(())
    }

    pub fn start(&self, sid: &str) -> Result<InstanceStatus, EngineError> {
        let slot = self.slot(sid)?;
        let mut inst = slot.lock();
        self.transition(&mut inst, Transition::Start)?;
        inst.sub = Some(self.subscribe_uplinks(sid));
        self.persist_status(&inst)?;
        Ok(inst.status)
    }

    /// Stop a running instance. Uploads already queued for it are handled
    /// first, so their downlinks go out before the instance goes quiet.
    pub fn stop(&self, sid: &str) -> Result<InstanceStatus, EngineError> {
        let slot = self.slot(sid)?;
        let mut inst = slot.lock();
        let from = inst.status.state;
        if next_phase(from, Transition::Stop).is_none() {
            return Err(EngineError::IllegalTransition { from, op: Transition::Stop });
        }
        self.drain_instance(&mut inst);
        self.transition(&mut inst, Transition::Stop)?;
        inst.sub = None;
        self.persist_status(&inst)?;
        Ok(inst.status)
    }

    /// Mark a running instance as crashed. Its in-memory ledger and any
    /// queued uploads are lost; the supervisor rebuilds it from storage.
    pub fn fail(&self, sid: &str) -> Result<InstanceStatus, EngineError> {
        let slot = self.slot(sid)?;
        let mut inst = slot.lock();
        self.transition(&mut inst, Transition::Fail)?;
        inst.sub = None;
        inst.reset_ledger();
        let now = self.now();
        inst.failures.push_back(now);
        self.persist_status(&inst)?;
        Ok(inst.status)
    }

    /// Restart failed instances by replaying their stored reports. An
    /// instance with more than [`MAX_FAILURES`] failures inside
    /// [`FAILURE_WINDOW_MS`] is left stopped instead.
    pub fn supervise(&self) -> Vec<(String, SupervisorAction)> {
        let now = self.now();
        let mut actions = Vec::new();
        for slot in self.slots() {
            let mut inst = slot.lock();
            if inst.status.state != Phase::Failed {
                continue;
            }
            while inst.failures.front().is_some_and(|t| now - *t > FAILURE_WINDOW_MS) {
                inst.failures.pop_front();
            }
            let sid = inst.id().to_string();
            let action = if inst.failures.len() > MAX_FAILURES {
                let _ = self.transition(&mut inst, Transition::GiveUp);
                SupervisorAction::GiveUp
            } else if self.recover(&mut inst).is_ok() {
                let _ = self.transition(&mut inst, Transition::Restart);
                inst.status.restarts += 1;
                inst.seq = 0;
                inst.sub = Some(self.subscribe_uplinks(&sid));
                SupervisorAction::Restart
            } else {
                continue;
            };
            let _ = self.persist_status(&inst);
            actions.push((sid, action));
        }
        actions
    }

    pub fn status(&self, sid: &str) -> Result<InstanceStatus, EngineError> {
        Ok(self.slot(sid)?.lock().status)
    }

    pub fn scenario(&self, sid: &str) -> Result<Scenario, EngineError> {
        Ok(self.slot(sid)?.lock().scenario.clone())
    }

    pub fn list(&self) -> Vec<InstanceSummary> {
        self.slots()
            .into_iter()
            .map(|slot| {
                let inst = slot.lock();
                InstanceSummary {
                    scenario_id: inst.id().to_string(),
                    name: inst.scenario.name.clone(),
                    status: inst.status,
                    participants: inst.participants.len(),
                    reports: self.data.report_count(inst.id()).unwrap_or(0),
                }
            })
            .collect()
    }

    /// Issue a single-use join code for a scenario.
    pub fn joincode(&self, sid: &str) -> Result<JoinCode, EngineError> {
        let scenario = self.scenario(sid)?;
        let code = generate_join_code_with(&scenario, &self.config.endpoint, &self.ids)?;
        let token = decode_join_code(&code.payload)?.token;
        self.tokens.lock().insert(token, TokenEntry { scenario_id: sid.to_string(), consumed: false });
        Ok(code)
    }

    pub fn join(&self, sid: &str, payload: &str) -> Result<JoinAck, EngineError> {
        let parts = decode_join_code(payload).map_err(|_| EngineError::InvalidToken)?;
        let slot = self.slot(sid)?;
        let mut inst = slot.lock();
        if inst.status.state != Phase::Running {
            return Err(EngineError::NotRunning(sid.to_string()));
        }
        {
            let mut tokens = self.tokens.lock();
            let entry = tokens.get_mut(&parts.token).filter(|t| t.scenario_id == sid && parts.scenario_id == sid);
            match entry {
                None => return Err(EngineError::InvalidToken),
                Some(t) if t.consumed => return Err(EngineError::TokenConsumed),
                Some(t) => t.consumed = true,
            }
        }
        let pid = self.ids.prefixed("p");
        self.data.record_participant(sid, ParticipantRecord { participant_id: pid.clone(), joined_at: self.now() })?;
        inst.add_participant(&pid);
        self.welcome(&mut inst, &pid)
    }

    /// Join again with a participant id handed out earlier.
    pub fn rejoin(&self, sid: &str, participant_id: &str) -> Result<JoinAck, EngineError> {
        let slot = self.slot(sid)?;
        let mut inst = slot.lock();
        if inst.status.state != Phase::Running {
            return Err(EngineError::NotRunning(sid.to_string()));
        }
        if !inst.participants.contains(participant_id) {
            return Err(EngineError::UnknownParticipant(participant_id.to_string()));
        }
        self.welcome(&mut inst, participant_id)
    }

    fn welcome(&self, inst: &mut Instance, pid: &str) -> Result<JoinAck, EngineError> {
        let ack = JoinAck {
            participant_id: pid.to_string(),
            scenario: inst.scenario.clone(),
            tasks: inst.scenario.motivation.static_requests.clone(),
            state: inst.states[pid].clone(),
        };
        let detail = serde_json::to_value(&ack).expect("join ack serializes");
        let mut notice = StatusNotice::new("joined", "welcome");
        notice.detail = Some(detail);
        let topic = Topic::down(inst.id(), pid).map_err(|_| EngineError::UnknownParticipant(pid.to_string()))?;
        let e = self.downlink(inst, topic, Body::Status(notice));
        self.broker.publish(&e)?;
        Ok(ack)
    }

    fn downlink(&self, inst: &mut Instance, topic: Topic, body: Body) -> Envelope {
        let seq = inst.next_seq();
        Envelope {
            message_id: self.ids.hex128(),
            topic,
            publisher: inst.publisher(),
            seq,
            sent_at: self.now(),
            body,
        }
    }

    /// Handle one uplink envelope for a running instance. Returns the
    /// downlinks, which have already been published.
    pub fn handle_upload(&self, sid: &str, e: &Envelope) -> Result<Vec<Envelope>, EngineError> {
        let slot = self.slot(sid)?;
        let mut inst = slot.lock();
        if inst.status.state != Phase::Running {
            return Err(EngineError::NotRunning(sid.to_string()));
        }
        Ok(self.process(&mut inst, e))
    }

    fn process(&self, inst: &mut Instance, e: &Envelope) -> Vec<Envelope> {
        let Body::Report(upload) = &e.body else {
            return Vec::new();
        };
        let Some(pid) = e.topic.participant().map(str::to_string) else {
            return Vec::new();
        };
        if e.topic.scenario_id() != inst.id() || inst.dedup.accept(&e.message_id) == crate::plane::DedupOutcome::Duplicate {
            return Vec::new();
        }
        let mut out = Vec::new();
        let reply = |code: &str, message: String| Body::Status(StatusNotice::new(code, message).replying_to(&e.message_id));
        let uplink_topic = Topic::down(inst.id(), &pid).expect("participant segment already validated");

        if let Err(code) = inst.check(&pid, upload) {
            out.push(self.downlink(inst, uplink_topic, reply(code, format!("report rejected: {code}"))));
            return self.publish_all(out);
        }
        let report = Report::from_upload(&e.message_id, inst.id(), &pid, upload.clone());
        match self.data.append_report(report.clone()) {
            Ok(_) => {}
            Err(DataError::DuplicateReport(_)) => return Vec::new(),
            Err(err) => {
                out.push(self.downlink(inst, uplink_topic, reply(err.code(), err.to_string())));
                return self.publish_all(out);
            }
        }
        let applied = inst.apply(&report);
        for req in applied.requests {
            out.push(self.downlink(inst, uplink_topic.clone(), Body::TaskRequest(req)));
        }
        let policy = &inst.scenario.motivation.reward;
        let rewards_on = policy.points_enabled || !policy.coupons.is_empty();
        match applied.reward {
            Some(Ok(event)) if rewards_on => {
                out.push(self.downlink(inst, uplink_topic.clone(), Body::RewardEvent(event)));
            }
            Some(Err(denial)) => {
                let mut notice = StatusNotice::new(denial.reason.clone(), "reward denied").replying_to(&e.message_id);
                notice.detail = Some(json!({ "checkpoint_id": denial.checkpoint_id }));
                out.push(self.downlink(inst, uplink_topic.clone(), Body::Status(notice)));
            }
            _ => {}
        }
        let rank = inst
            .scenario
            .motivation
            .reward
            .ranking_enabled
            .then(|| ranking(inst.states.values()).into_iter().find(|r| r.participant_id == pid).map(|r| r.rank))
            .flatten();
        let state = inst.states[&pid].clone();
        let feedback = build_feedback(
            &FeedbackEvent { report: &report, state: &state, rank },
            &inst.scenario.motivation.feedback,
        );
        for (audience, fb) in feedback {
            let topic = match audience {
                Audience::Broadcast => Topic::broadcast(inst.id()).expect("valid scenario id"),
                Audience::Participant(p) => Topic::down(inst.id(), &p).expect("valid participant id"),
            };
            let body = match fb {
                Feedback::Pin(p) => Body::MapPin(p),
                Feedback::Timeline(t) => Body::TimelineEntry(t),
                Feedback::Score(s) => Body::ScoreSnapshot(s),
            };
            out.push(self.downlink(inst, topic, body));
        }
        self.publish_all(out)
    }

    fn publish_all(&self, out: Vec<Envelope>) -> Vec<Envelope> {
        for e in &out {
            // Topics are built from validated ids and seq grows per instance
            // incarnation, so publishing cannot fail.
            let _ = self.broker.publish(e);
        }
        out
    }

    fn drain_instance(&self, inst: &mut Instance) -> usize {
        let pending = inst.sub.as_ref().map(|s| s.drain()).unwrap_or_default();
        for e in &pending {
            self.process(inst, e);
        }
        pending.len()
    }

    /// Process everything queued on the message plane. Returns the number of
    /// uplink envelopes handled by running instances.
    pub fn pump(&self) -> usize {
        let mut handled = 0;
        for slot in self.slots() {
            let mut inst = slot.lock();
            if inst.status.state == Phase::Running {
                handled += self.drain_instance(&mut inst);
            }
        }
        let seen = self.gateway.lock().drain();
        for e in seen {
            if !matches!(e.body, Body::Report(_)) {
                continue;
            }
            let Some(pid) = e.topic.participant() else { continue };
            let sid = e.topic.scenario_id();
            let code = match self.instances.read().get(sid).cloned() {
                Some(slot) => {
                    let inst = slot.lock();
                    if inst.status.state == Phase::Running || inst.dedup.contains(&e.message_id) {
                        continue;
                    }
                    reject::SCENARIO_STOPPED
                }
                None => reject::UNKNOWN_SCENARIO,
            };
            let Ok(topic) = Topic::down(sid, pid) else { continue };
            let reply = Envelope {
                message_id: self.ids.hex128(),
                topic,
                publisher: MANAGER_PUBLISHER.into(),
                seq: self.manager_seq.fetch_add(1, Ordering::SeqCst) + 1,
                sent_at: self.now(),
                body: Body::Status(StatusNotice::new(code, code).replying_to(&e.message_id)),
            };
            let _ = self.broker.publish(&reply);
        }
        handled
    }

    pub fn participant(&self, sid: &str, pid: &str) -> Result<ParticipantState, EngineError> {
        let slot = self.slot(sid)?;
        let inst = slot.lock();
        inst.states.get(pid).cloned().ok_or_else(|| EngineError::UnknownParticipant(pid.to_string()))
    }

    /// Every participant ledger, keyed by participant id.
    pub fn ledgers(&self, sid: &str) -> Result<BTreeMap<String, ParticipantState>, EngineError> {
        Ok(self.slot(sid)?.lock().states.clone())
    }

    pub fn task_board(&self, sid: &str) -> Result<TaskBoard, EngineError> {
        Ok(self.slot(sid)?.lock().board.clone())
    }

    pub fn ranking(&self, sid: &str) -> Result<Vec<RankEntry>, EngineError> {
        let slot = self.slot(sid)?;
        let inst = slot.lock();
        if !inst.scenario.motivation.reward.ranking_enabled {
            return Err(EngineError::FunctionDisabled("ranking"));
        }
        Ok(ranking(inst.states.values()))
    }

    fn known(&self, sid: &str) -> Result<(), EngineError> {
        self.slot(sid).map(|_| ())
    }

    pub fn query(&self, sid: &str, filters: &Filters) -> Result<Vec<Report>, EngineError> {
        self.known(sid)?;
        Ok(self.data.query(sid, filters)?)
    }

    pub fn edit(&self, sid: &str, kind: EditKind, target: &str, arg: Option<String>) -> Result<EditSummary, EngineError> {
        self.known(sid)?;
        let op = EditOp { op_id: self.ids.prefixed("op"), at: self.now(), kind, target: target.to_string(), arg };
        Ok(self.data.apply_edit(sid, op)?)
    }

    pub fn restore(&self, sid: &str) -> Result<usize, EngineError> {
        self.known(sid)?;
        Ok(self.data.restore(sid)?)
    }

    pub fn export(&self, sid: &str, format: ExportFormat, filters: &Filters) -> Result<Vec<u8>, EngineError> {
        self.known(sid)?;
        Ok(self.data.export(sid, format, filters)?)
    }

    /// Load a JSON export into a scenario that is not running, then rebuild
    /// its ledger so it stays consistent with the report log.
    pub fn import(&self, sid: &str, json: &[u8]) -> Result<usize, EngineError> {
        let slot = self.slot(sid)?;
        let mut inst = slot.lock();
        if inst.status.state == Phase::Running {
            return Err(EngineError::IllegalTransition { from: Phase::Running, op: Transition::Stop });
        }
        let n = self.data.import(sid, json)?;
        if inst.status.state != Phase::Failed {
            self.recover(&mut inst)?;
        }
        Ok(n)
    }

    /// Hash of everything observable about scenarios, data and ledgers with
    /// volatile values (generated ids, wall-clock times) replaced by ordinals.
    /// Two engines driven through the same operations agree on it.
    pub fn state_digest(&self) -> String {
        let mut scenarios = Vec::new();
        for slot in self.slots() {
            let inst = slot.lock();
            let sid = inst.id().to_string();
            let mut names: HashMap<String, String> = HashMap::new();
            let alias = |id: &str, prefix: &str, names: &mut HashMap<String, String>| -> String {
                let n = names.len();
                names.entry(id.to_string()).or_insert_with(|| format!("{prefix}{n}")).clone()
            };
            for p in self.data.participants(&sid).unwrap_or_default() {
                alias(&p.participant_id, "p", &mut names);
            }
            let view = self.data.view(&sid).unwrap_or_default();
            for r in &view {
                alias(&r.participant_id, "p", &mut names);
                alias(&r.report_id, "r", &mut names);
            }
            let reports: Vec<_> = view
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.report_id = names[&r.report_id].clone();
                    r.participant_id = names[&r.participant_id].clone();
                    r
                })
                .collect();
            let edits: Vec<_> = self
                .data
                .edit_log(&sid)
                .unwrap_or_default()
                .into_iter()
                .map(|op| json!({ "kind": op.kind, "target": names.get(&op.target), "arg": op.arg }))
                .collect();
            let ledgers: BTreeMap<String, ParticipantState> = inst
                .states
                .values()
                .map(|s| {
                    let key = names.get(&s.participant_id).cloned().unwrap_or_else(|| s.participant_id.clone());
                    (key.clone(), ParticipantState { participant_id: key, ..s.clone() })
                })
                .collect();
            scenarios.push(json!({
                "scenario": inst.scenario,
                "state": inst.status.state,
                "restarts": inst.status.restarts,
                "reports": reports,
                "edits": edits,
                "ledgers": ledgers,
                "board": inst.board.uploads,
            }));
        }
        let doc = canonical::to_canonical_string(&scenarios).expect("digest serializes");
        hex::encode(Sha256::digest(doc.as_bytes()))
    }
}
