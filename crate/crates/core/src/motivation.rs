//! Points, levels, coupons, contribution limits, demand weighting, dynamic
//! requests, rankings and feedback artifacts.
//!
//! Everything here is a pure function of participant state, the task board
//! and the scenario's policy; the runtime serializes calls per instance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::data::{Report, ReportContent};
use crate::geo::{GeoPoint, Geofence};
use crate::scenario::{Checkpoint, CouponTrigger, DynamicRule, FeedbackPolicy, RewardPolicy, TaskKind};

pub const DENIAL_CONTRIBUTION_LIMIT: &str = "contribution limit";

/// Per-participant motivation ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantState {
    pub participant_id: String,
    pub points: u64,
    pub level: u64,
    /// Granted coupon ids, in grant order.
    pub coupons: Vec<String>,
    pub contributions: BTreeMap<String, u32>,
    pub last_position: Option<GeoPoint>,
}

impl ParticipantState {
    pub fn new(participant_id: &str) -> Self {
        Self {
            participant_id: participant_id.to_string(),
            points: 0,
            level: 1,
            coupons: Vec::new(),
            contributions: BTreeMap::new(),
            last_position: None,
        }
    }

    pub fn contributions_to(&self, checkpoint_id: &str) -> u32 {
        self.contributions.get(checkpoint_id).copied().unwrap_or(0)
    }
}

pub fn level_for(points: u64, threshold: u64) -> u64 {
    points / threshold.max(1) + 1
}

/// Accepted-report counts per checkpoint, overall and per participant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskBoard {
    pub uploads: BTreeMap<String, u64>,
    pub per_participant: BTreeMap<String, BTreeMap<String, u64>>,
}

impl TaskBoard {
    pub fn uploads(&self, checkpoint_id: &str) -> u64 {
        self.uploads.get(checkpoint_id).copied().unwrap_or(0)
    }

    pub fn max_uploads(&self) -> u64 {
        self.uploads.values().copied().max().unwrap_or(0)
    }

    pub fn record(&mut self, checkpoint_id: &str, participant_id: &str) {
        *self.uploads.entry(checkpoint_id.to_string()).or_default() += 1;
        *self
            .per_participant
            .entry(checkpoint_id.to_string())
            .or_default()
            .entry(participant_id.to_string())
            .or_default() += 1;
    }
}

/// `1 + alpha * (1 - uploads(c) / max(1, max uploads))`, or 1 when weighting is off.
pub fn current_weight(checkpoint: &Checkpoint, board: &TaskBoard, policy: &RewardPolicy) -> f64 {
    if !policy.demand_weighting_enabled {
        return 1.0;
    }
    let max = board.max_uploads().max(1) as f64;
    let rate = board.uploads(&checkpoint.checkpoint_id) as f64 / max;
    1.0 + policy.weighting_alpha * (1.0 - rate)
}

/// Half-up rounding to whole points. The epsilon absorbs representation
/// error in products such as `10 * 1.25`.
pub fn round_points(base: u32, weight: f64) -> u64 {
    (base as f64 * weight + 0.5 + 1e-9).floor().max(0.0) as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardEvent {
    pub participant_id: String,
    pub checkpoint_id: String,
    pub points_awarded: u64,
    pub weight_applied: f64,
    /// Coupons newly granted by this award.
    pub coupons: Vec<String>,
    pub new_level: u64,
    pub total_points: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Denial {
    pub participant_id: String,
    pub checkpoint_id: String,
    pub reason: String,
}

/// Evaluate one accepted contribution to `checkpoint`.
///
/// `board` must not yet include the contribution being rewarded: the weight is
/// the one on offer when the participant uploaded.
pub fn award(
    state: &ParticipantState,
    checkpoint: &Checkpoint,
    board: &TaskBoard,
    policy: &RewardPolicy,
) -> Result<(ParticipantState, RewardEvent), Denial> {
    let done = state.contributions_to(&checkpoint.checkpoint_id);
    if let Some(limit) = checkpoint.contribution_limit {
        if done >= limit {
            return Err(Denial {
                participant_id: state.participant_id.clone(),
                checkpoint_id: checkpoint.checkpoint_id.clone(),
                reason: DENIAL_CONTRIBUTION_LIMIT.to_string(),
            });
        }
    }
    let mut next = state.clone();
    let (points, weight) = if policy.points_enabled {
        let w = current_weight(checkpoint, board, policy);
        (round_points(checkpoint.base_points, w), w)
    } else {
        (0, 1.0)
    };
    next.points += points;
    next.level = level_for(next.points, policy.level_threshold_points);
    *next.contributions.entry(checkpoint.checkpoint_id.clone()).or_default() += 1;

    let mut granted = Vec::new();
    for coupon in &policy.coupons {
        if next.coupons.contains(&coupon.coupon_id) {
            continue;
        }
        let hit = match &coupon.trigger {
            CouponTrigger::Points { threshold } => policy.points_enabled && next.points >= *threshold,
            CouponTrigger::Checkpoint { checkpoint_id } => *checkpoint_id == checkpoint.checkpoint_id,
        };
        if hit {
            next.coupons.push(coupon.coupon_id.clone());
            granted.push(coupon.coupon_id.clone());
        }
    }
    let event = RewardEvent {
        participant_id: next.participant_id.clone(),
        checkpoint_id: checkpoint.checkpoint_id.clone(),
        points_awarded: points,
        weight_applied: weight,
        coupons: granted,
        new_level: next.level,
        total_points: next.points,
    };
    Ok((next, event))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRequest {
    pub rule_id: String,
    pub message: String,
    pub fence: Geofence,
    pub task: TaskKind,
}

/// Task requests for every rule whose fence was just entered.
pub fn evaluate_dynamic(prev: Option<&GeoPoint>, cur: &GeoPoint, rules: &[DynamicRule]) -> Vec<TaskRequest> {
    rules
        .iter()
        .filter(|r| r.fence.contains(cur) && !prev.is_some_and(|p| r.fence.contains(p)))
        .map(|r| TaskRequest {
            rule_id: r.rule_id.clone(),
            message: r.message.clone(),
            fence: r.fence,
            task: r.task.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankEntry {
    pub participant_id: String,
    pub points: u64,
    pub rank: u32,
}

/// Descending by points with competition ranking ("1224"). Equal scores are
/// listed by participant id so the output does not depend on input order.
pub fn ranking<'a, I>(states: I) -> Vec<RankEntry>
where
    I: IntoIterator<Item = &'a ParticipantState>,
{
    let mut rows: Vec<(&str, u64)> = states.into_iter().map(|s| (s.participant_id.as_str(), s.points)).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut out: Vec<RankEntry> = Vec::with_capacity(rows.len());
    for (i, (id, points)) in rows.into_iter().enumerate() {
        let rank = match out.last() {
            Some(prev) if prev.points == points => prev.rank,
            _ => i as u32 + 1,
        };
        out.push(RankEntry { participant_id: id.to_string(), points, rank });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPin {
    pub report_id: String,
    pub participant_id: String,
    pub position: GeoPoint,
    pub report_kind: String,
    pub captured_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub report_id: String,
    pub participant_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photo_ref: Option<String>,
    pub timestamp: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSnapshot {
    pub participant_id: String,
    pub points: u64,
    pub level: u64,
    pub coupons: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Audience {
    Broadcast,
    Participant(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    Pin(MapPin),
    Timeline(TimelineEntry),
    Score(ScoreSnapshot),
}

/// What feedback is built from: an accepted report and the uploader's ledger
/// after any reward was applied.
pub struct FeedbackEvent<'a> {
    pub report: &'a Report,
    pub state: &'a ParticipantState,
    pub rank: Option<u32>,
}

pub fn build_feedback(event: &FeedbackEvent<'_>, policy: &FeedbackPolicy) -> Vec<(Audience, Feedback)> {
    let r = event.report;
    let mut out = Vec::new();
    if policy.map_pins {
        if let Some(position) = r.position {
            out.push((
                Audience::Broadcast,
                Feedback::Pin(MapPin {
                    report_id: r.report_id.clone(),
                    participant_id: r.participant_id.clone(),
                    position,
                    report_kind: r.payload.kind_name().to_string(),
                    captured_at: r.captured_at,
                }),
            ));
        }
    }
    if policy.timeline {
        let entry = match &r.payload {
            ReportContent::Photo { blob_ref, caption } => Some((caption.clone(), Some(blob_ref.clone()))),
            ReportContent::QuestionnaireAnswer { answers } => {
                Some((format!("answered {} question(s)", answers.len()), None))
            }
            ReportContent::SensorSample { .. } => None,
        };
        if let Some((text, photo_ref)) = entry {
            out.push((
                Audience::Broadcast,
                Feedback::Timeline(TimelineEntry {
                    report_id: r.report_id.clone(),
                    participant_id: r.participant_id.clone(),
                    text,
                    photo_ref,
                    timestamp: r.captured_at,
                }),
            ));
        }
    }
    if policy.score_panel {
        out.push((
            Audience::Participant(r.participant_id.clone()),
            Feedback::Score(ScoreSnapshot {
                participant_id: event.state.participant_id.clone(),
                points: event.state.points,
                level: event.state.level,
                coupons: event.state.coupons.clone(),
                rank: event.rank,
            }),
        ));
    }
    out
}
