use serde::{Deserialize, Serialize};

use crate::clock::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Created,
    Running,
    Stopped,
    Failed,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Created => "created",
            Phase::Running => "running",
            Phase::Stopped => "stopped",
            Phase::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Start,
    Stop,
    Fail,
    /// Supervisor only.
    Restart,
    /// Supervisor only: too many recent failures.
    GiveUp,
}

impl Transition {
    pub const ALL: [Transition; 5] =
        [Transition::Start, Transition::Stop, Transition::Fail, Transition::Restart, Transition::GiveUp];
}

/// The lifecycle table. `None` means the transition is illegal.
pub fn next_phase(from: Phase, t: Transition) -> Option<Phase> {
    use Phase::*;
    use Transition::*;
    match (from, t) {
        (Created | Stopped, Start) => Some(Running),
        (Running, Stop) => Some(Stopped),
        (Running, Fail) => Some(Failed),
        (Failed, Restart) => Some(Running),
        (Failed, GiveUp) => Some(Stopped),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceStatus {
    pub state: Phase,
    pub since: Millis,
    pub restarts: u32,
}

impl InstanceStatus {
    pub fn created(at: Millis) -> Self {
        Self { state: Phase::Created, since: at, restarts: 0 }
    }
}
