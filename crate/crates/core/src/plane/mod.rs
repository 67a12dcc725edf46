//! The pub/sub message plane between participants and scenario instances.
//!
//! Delivery is at-least-once; consumers turn it into effectively-once
//! processing with a [`DedupWindow`].

mod broker;
mod envelope;
mod topic;

use std::collections::{HashSet, VecDeque};

pub use broker::{Broker, PublishError, Receipt, Subscription, SubscriptionId};
pub use envelope::{Body, Envelope, Kind, StatusNotice};
pub use topic::{Direction, Target, Topic, TopicError, TopicFilter, BROADCAST, ROOT};

/// How many recent message ids a scenario remembers.
pub const DEDUP_WINDOW: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedupOutcome {
    Accept,
    Duplicate,
}

/// The most recent message ids seen by one consumer, oldest evicted first.
#[derive(Debug, Clone)]
pub struct DedupWindow {
    capacity: usize,
    order: VecDeque<String>,
    seen: HashSet<String>,
}

impl Default for DedupWindow {
    fn default() -> Self {
        Self::with_capacity(DEDUP_WINDOW)
    }
}

impl DedupWindow {
    pub fn with_capacity(capacity: usize) -> Self {
        Self { capacity, order: VecDeque::new(), seen: HashSet::new() }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.seen.contains(id)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn accept(&mut self, id: &str) -> DedupOutcome {
        if self.seen.contains(id) {
            return DedupOutcome::Duplicate;
        }
        if self.order.len() == self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.seen.remove(&old);
            }
        }
        self.order.push_back(id.to_string());
        self.seen.insert(id.to_string());
        DedupOutcome::Accept
    }
}

pub fn dedup_accept(seen: &mut DedupWindow, e: &Envelope) -> DedupOutcome {
    seen.accept(&e.message_id)
}
