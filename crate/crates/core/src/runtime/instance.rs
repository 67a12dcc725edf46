use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::clock::Millis;
use crate::data::{Answer, Report, ReportContent, Upload};
use crate::motivation::{award, evaluate_dynamic, Denial, ParticipantState, RewardEvent, TaskBoard, TaskRequest};
use crate::plane::{DedupWindow, Subscription};
use crate::scenario::{answer_is_valid, QuestionKind, QuestionnaireNode, Scenario, TaskKind, ANY_ANSWER};

use super::status::InstanceStatus;

/// Stable codes carried by rejection downlinks.
pub mod reject {
    pub const UNKNOWN_PARTICIPANT: &str = "unknown participant";
    pub const OUTSIDE_PERIOD: &str = "outside period";
    pub const INVALID_COORDINATE: &str = "invalid coordinate";
    pub const SENSOR_NOT_ENABLED: &str = "sensor not enabled";
    pub const UNKNOWN_CHECKPOINT: &str = "unknown checkpoint";
    pub const UNKNOWN_RULE: &str = "unknown rule";
    pub const TASK_MISMATCH: &str = "task mismatch";
    pub const OUTSIDE_CHECKPOINT: &str = "outside checkpoint";
    pub const INVALID_ANSWER: &str = "invalid answer";
    pub const EMPTY_PHOTO: &str = "empty photo reference";
    pub const SCENARIO_STOPPED: &str = "scenario stopped";
    pub const UNKNOWN_SCENARIO: &str = "unknown scenario";

    pub const ALL: [&str; 12] = [
        UNKNOWN_PARTICIPANT,
        OUTSIDE_PERIOD,
        INVALID_COORDINATE,
        SENSOR_NOT_ENABLED,
        UNKNOWN_CHECKPOINT,
        UNKNOWN_RULE,
        TASK_MISMATCH,
        OUTSIDE_CHECKPOINT,
        INVALID_ANSWER,
        EMPTY_PHOTO,
        SCENARIO_STOPPED,
        UNKNOWN_SCENARIO,
    ];
}

pub(crate) struct Instance {
    pub scenario: Scenario,
    pub status: InstanceStatus,
    pub participants: BTreeSet<String>,
    pub board: TaskBoard,
    pub states: BTreeMap<String, ParticipantState>,
    pub dedup: DedupWindow,
    pub sub: Option<Subscription>,
    pub failures: VecDeque<Millis>,
    pub seq: u64,
}

/// Ledger effects of one accepted report.
pub(crate) struct Applied {
    pub requests: Vec<TaskRequest>,
    pub reward: Option<Result<RewardEvent, Denial>>,
}

impl Instance {
    pub fn new(scenario: Scenario, status: InstanceStatus) -> Self {
        Self {
            scenario,
            status,
            participants: BTreeSet::new(),
            board: TaskBoard::default(),
            states: BTreeMap::new(),
            dedup: DedupWindow::default(),
            sub: None,
            failures: VecDeque::new(),
            seq: 0,
        }
    }

    pub fn id(&self) -> &str {
        &self.scenario.scenario_id
    }

    /// Downlink publisher for the current incarnation. A restarted instance
    /// is a new publisher, so its seq numbering starts afresh.
    pub fn publisher(&self) -> String {
        format!("instance/{}#{}", self.scenario.scenario_id, self.status.restarts)
    }

    pub fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    pub fn reset_ledger(&mut self) {
        self.participants.clear();
        self.board = TaskBoard::default();
        self.states.clear();
        self.dedup = DedupWindow::default();
    }

    pub fn add_participant(&mut self, pid: &str) {
        self.participants.insert(pid.to_string());
        self.states.entry(pid.to_string()).or_insert_with(|| ParticipantState::new(pid));
    }

    /// Rebuild board, ledgers and dedup window from the stored reports.
    pub fn replay<'a>(&mut self, participants: impl IntoIterator<Item = &'a str>, reports: &[Report]) {
        self.reset_ledger();
        for p in participants {
            self.add_participant(p);
        }
        for r in reports {
            self.dedup.accept(&r.report_id);
            self.apply(r);
        }
    }

    /// Scenario-level checks on an upload; `Err` carries a rejection code.
    pub fn check(&self, pid: &str, u: &Upload) -> Result<(), &'static str> {
        let s = &self.scenario;
        if !self.participants.contains(pid) {
            return Err(reject::UNKNOWN_PARTICIPANT);
        }
        if !s.period.contains(u.captured_at) {
            return Err(reject::OUTSIDE_PERIOD);
        }
        if u.position.is_some_and(|p| !p.is_valid()) {
            return Err(reject::INVALID_COORDINATE);
        }
        match &u.content {
            ReportContent::SensorSample { sensor, .. } if !s.sensing.is_enabled(*sensor) => {
                return Err(reject::SENSOR_NOT_ENABLED)
            }
            ReportContent::Photo { blob_ref, .. } if blob_ref.is_empty() => return Err(reject::EMPTY_PHOTO),
            _ => {}
        }
        if let Some(cid) = &u.checkpoint_id {
            let cp = s.checkpoint(cid).ok_or(reject::UNKNOWN_CHECKPOINT)?;
            check_task(&cp.task, &u.content)?;
            match u.position {
                Some(p) if cp.fence.contains(&p) => {}
                _ => return Err(reject::OUTSIDE_CHECKPOINT),
            }
        }
        if let Some(rid) = &u.rule_id {
            let rule = s.dynamic_rule(rid).ok_or(reject::UNKNOWN_RULE)?;
            check_task(&rule.task, &u.content)?;
        }
        Ok(())
    }

    /// Fold an accepted report into the ledger. Live handling and recovery
    /// both go through here, which is what makes replay exact.
    pub fn apply(&mut self, r: &Report) -> Applied {
        let pid = r.participant_id.as_str();
        let state = self.states.entry(pid.to_string()).or_insert_with(|| ParticipantState::new(pid));
        let mut requests = Vec::new();
        if let Some(pos) = r.position {
            requests = evaluate_dynamic(state.last_position.as_ref(), &pos, &self.scenario.motivation.dynamic_rules);
            state.last_position = Some(pos);
        }
        let reward = r.checkpoint_id.as_deref().and_then(|cid| self.scenario.checkpoint(cid)).map(|cp| {
            let outcome = award(state, cp, &self.board, &self.scenario.motivation.reward);
            self.board.record(&cp.checkpoint_id, pid);
            outcome.map(|(next, event)| {
                *state = next;
                event
            })
        });
        Applied { requests, reward }
    }
}

fn check_task(task: &TaskKind, content: &ReportContent) -> Result<(), &'static str> {
    match (task, content) {
        (TaskKind::Photo, ReportContent::Photo { .. }) => Ok(()),
        (TaskKind::SensorSample { sensor }, ReportContent::SensorSample { sensor: got, .. }) if sensor == got => Ok(()),
        (TaskKind::Questionnaire { entry, nodes }, ReportContent::QuestionnaireAnswer { answers }) => {
            if answers_follow_graph(entry, nodes, answers) {
                Ok(())
            } else {
                Err(reject::INVALID_ANSWER)
            }
        }
        _ => Err(reject::TASK_MISMATCH),
    }
}

/// Answers must walk the graph from `entry` to a terminal answer.
pub fn answers_follow_graph(entry: &str, nodes: &[QuestionnaireNode], answers: &[Answer]) -> bool {
    let mut expected = Some(entry.to_string());
    for a in answers {
        let Some(want) = expected.take() else {
            return false;
        };
        if a.node_id != want {
            return false;
        }
        let Some(node) = nodes.iter().find(|n| n.node_id == a.node_id) else {
            return false;
        };
        let answer_ok = match node.kind {
            QuestionKind::PhotoWithText => !a.answer.is_empty(),
            _ => a.answer != ANY_ANSWER && answer_is_valid(node, &a.answer),
        };
        if !answer_ok {
            return false;
        }
        match node.next.get(&a.answer).or_else(|| node.next.get(ANY_ANSWER)) {
            Some(next) => expected = next.clone(),
            None => return false,
        }
    }
    !answers.is_empty() && expected.is_none()
}
