use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROOT: &str = "pms";
pub const BROADCAST: &str = "broadcast";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopicError {
    #[error("malformed topic: {0}")]
    MalformedTopic(String),
    #[error("malformed pattern: {0}")]
    MalformedPattern(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Participant(String),
    Broadcast,
}

/// `pms/<scenario_id>/up/<participant_id>` or
/// `pms/<scenario_id>/down/<participant_id|broadcast>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Topic {
    scenario_id: String,
    direction: Direction,
    target: Target,
}

pub(crate) fn segment_ok(s: &str) -> bool {
    !s.is_empty() && !s.contains(['/', '#', '+'])
}

impl Topic {
    fn build(scenario_id: &str, direction: Direction, target: Target) -> Result<Self, TopicError> {
        let t = Topic { scenario_id: scenario_id.to_string(), direction, target };
        let ok = segment_ok(scenario_id)
            && match (&t.direction, &t.target) {
                (_, Target::Participant(p)) => segment_ok(p) && p != BROADCAST,
                (Direction::Down, Target::Broadcast) => true,
                (Direction::Up, Target::Broadcast) => false,
            };
        if ok {
            Ok(t)
        } else {
            Err(TopicError::MalformedTopic(t.render()))
        }
    }

    pub fn up(scenario_id: &str, participant_id: &str) -> Result<Self, TopicError> {
        Self::build(scenario_id, Direction::Up, Target::Participant(participant_id.to_string()))
    }

    pub fn down(scenario_id: &str, participant_id: &str) -> Result<Self, TopicError> {
        Self::build(scenario_id, Direction::Down, Target::Participant(participant_id.to_string()))
    }

    pub fn broadcast(scenario_id: &str) -> Result<Self, TopicError> {
        Self::build(scenario_id, Direction::Down, Target::Broadcast)
    }

    pub fn parse(s: &str) -> Result<Self, TopicError> {
        let bad = || TopicError::MalformedTopic(s.to_string());
        let parts: Vec<&str> = s.split('/').collect();
        match parts.as_slice() {
            [ROOT, sid, "up", pid] => Self::up(sid, pid).map_err(|_| bad()),
            [ROOT, sid, "down", BROADCAST] => Self::broadcast(sid).map_err(|_| bad()),
            [ROOT, sid, "down", pid] => Self::down(sid, pid).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }

    pub fn scenario_id(&self) -> &str {
        &self.scenario_id
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn participant(&self) -> Option<&str> {
        match &self.target {
            Target::Participant(p) => Some(p),
            Target::Broadcast => None,
        }
    }

    pub fn segments(&self) -> [&str; 4] {
        let dir = match self.direction {
            Direction::Up => "up",
            Direction::Down => "down",
        };
        let target = match &self.target {
            Target::Participant(p) => p.as_str(),
            Target::Broadcast => BROADCAST,
        };
        [ROOT, &self.scenario_id, dir, target]
    }

    pub fn render(&self) -> String {
        self.segments().join("/")
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl TryFrom<String> for Topic {
    type Error = TopicError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Topic::parse(&s)
    }
}

impl From<Topic> for String {
    fn from(t: Topic) -> String {
        t.render()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum FilterSegment {
    Any,
    Exact(String),
}

/// A subscription pattern. `+` matches exactly one segment; `#` is not supported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicFilter {
    segments: Vec<FilterSegment>,
}

impl TopicFilter {
    pub fn parse(s: &str) -> Result<Self, TopicError> {
        let segments = s
            .split('/')
            .map(|seg| match seg {
                "+" => Ok(FilterSegment::Any),
                _ if segment_ok(seg) => Ok(FilterSegment::Exact(seg.to_string())),
                _ => Err(TopicError::MalformedPattern(s.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TopicFilter { segments })
    }

    pub fn matches(&self, topic: &Topic) -> bool {
        let parts = topic.segments();
        parts.len() == self.segments.len()
            && self.segments.iter().zip(&parts).all(|(f, p)| match f {
                FilterSegment::Any => true,
                FilterSegment::Exact(e) => e == p,
            })
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self
            .segments
            .iter()
            .map(|s| match s {
                FilterSegment::Any => "+",
                FilterSegment::Exact(e) => e.as_str(),
            })
            .collect();
        f.write_str(&parts.join("/"))
    }
}
