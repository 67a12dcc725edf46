//! In-process broker with at-least-once fan-out.
//!
//! Publishing is serialized under one lock, so every subscriber sees the
//! envelopes of a given publisher on a given topic in seq order. There is no
//! retention: a subscriber only receives what is published while it is
//! subscribed.

use std::collections::HashMap;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use thiserror::Error;

use super::envelope::Envelope;
use super::topic::{Topic, TopicError, TopicFilter};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PublishError {
    #[error("seq regression from {publisher} on {topic}: {got} after {last}")]
    SeqRegression { publisher: String, topic: String, last: u64, got: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub message_id: String,
    pub deliveries: usize,
}

pub type SubscriptionId = u64;

type Callback = Box<dyn Fn(&Envelope) -> bool + Send>;

enum Sink {
    Channel(Sender<Envelope>),
    Callback(Callback),
}

impl Sink {
    fn deliver(&self, e: &Envelope) -> bool {
        match self {
            Sink::Channel(tx) => tx.send(e.clone()).is_ok(),
            Sink::Callback(f) => f(e),
        }
    }
}

struct Subscriber {
    id: SubscriptionId,
    filter: TopicFilter,
    sink: Sink,
}

#[derive(Default)]
struct Inner {
    next_id: SubscriptionId,
    subscribers: Vec<Subscriber>,
    last_seq: HashMap<(String, Topic), (u64, String)>,
}

#[derive(Clone, Default)]
pub struct Broker {
    inner: Arc<Mutex<Inner>>,
}

impl Broker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Deliver `e` to every matching subscriber.
    ///
    /// The seq must exceed the last one accepted for `(publisher, topic)`.
    /// Re-publishing that last envelope unchanged is a redelivery and is
    /// fanned out again.
    pub fn publish(&self, e: &Envelope) -> Result<Receipt, PublishError> {
        let mut inner = self.inner.lock();
        let key = (e.publisher.clone(), e.topic.clone());
        if let Some((last, last_id)) = inner.last_seq.get(&key) {
            let redelivery = e.seq == *last && e.message_id == *last_id;
            if e.seq <= *last && !redelivery {
                return Err(PublishError::SeqRegression {
                    publisher: e.publisher.clone(),
                    topic: e.topic.render(),
                    last: *last,
                    got: e.seq,
                });
            }
        }
        inner.last_seq.insert(key, (e.seq, e.message_id.clone()));
        let mut deliveries = 0;
        inner.subscribers.retain(|s| {
            if !s.filter.matches(&e.topic) {
                return true;
            }
            let alive = s.sink.deliver(e);
            if alive {
                deliveries += 1;
            }
            alive
        });
        Ok(Receipt { message_id: e.message_id.clone(), deliveries })
    }

    pub fn subscribe(&self, pattern: &str) -> Result<Subscription, TopicError> {
        let filter = TopicFilter::parse(pattern)?;
        let (tx, rx) = mpsc::channel();
        let id = self.attach(filter, Sink::Channel(tx));
        Ok(Subscription { id, rx, broker: self.clone() })
    }

    /// Register a callback sink. Returning `false` from the callback detaches it.
    pub fn subscribe_with<F>(&self, pattern: &str, f: F) -> Result<SubscriptionId, TopicError>
    where
        F: Fn(&Envelope) -> bool + Send + 'static,
    {
        let filter = TopicFilter::parse(pattern)?;
        Ok(self.attach(filter, Sink::Callback(Box::new(f))))
    }

    fn attach(&self, filter: TopicFilter, sink: Sink) -> SubscriptionId {
        let mut inner = self.inner.lock();
        inner.next_id += 1;
        let id = inner.next_id;
        inner.subscribers.push(Subscriber { id, filter, sink });
        id
    }

    pub fn unsubscribe(&self, id: SubscriptionId) -> bool {
        let mut inner = self.inner.lock();
        let before = inner.subscribers.len();
        inner.subscribers.retain(|s| s.id != id);
        before != inner.subscribers.len()
    }

    pub fn subscriber_count(&self) -> usize {
        self.inner.lock().subscribers.len()
    }
}

/// An ordered stream of matching envelopes. Dropping it unsubscribes.
pub struct Subscription {
    id: SubscriptionId,
    rx: Receiver<Envelope>,
    broker: Broker,
}

impl Subscription {
    pub fn id(&self) -> SubscriptionId {
        self.id
    }

    pub fn try_recv(&self) -> Option<Envelope> {
        match self.rx.try_recv() {
            Ok(e) => Some(e),
            Err(TryRecvError::Empty | TryRecvError::Disconnected) => None,
        }
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<Envelope> {
        match self.rx.recv_timeout(timeout) {
            Ok(e) => Some(e),
            Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => None,
        }
    }

    /// Everything queued right now.
    pub fn drain(&self) -> Vec<Envelope> {
        std::iter::from_fn(|| self.try_recv()).collect()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.broker.unsubscribe(self.id);
    }
}
