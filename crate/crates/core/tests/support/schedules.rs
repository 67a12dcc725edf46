//! Small-schedule enumeration for the message plane and for replay-heavy
//! upload streams.
#![allow(dead_code)]

use std::collections::BTreeMap;

use pms_core::data::{ReportContent, Upload};
use pms_core::motivation::ParticipantState;
use pms_core::plane::{Body, Broker, Envelope, StatusNotice, Subscription, Topic, TopicFilter};
use pms_core::runtime::{Engine, EngineConfig};
use pms_core::scenario::Scenario;

pub const FILTERS: [&str; 3] = ["pms/s1/up/+", "pms/s1/up/pa", "pms/+/up/pb"];
const PUBLISHERS: [&str; 2] = ["pa", "pb"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Next envelope from publisher `i`.
    Fresh(usize),
    /// The publisher's last envelope again.
    Again(usize),
}

/// Join before publish `join` and leave before publish `leave`; `leave` may
/// be one past the end (never leaves).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub filter: usize,
    pub join: usize,
    pub leave: usize,
}

pub fn windows(n: usize, filter: usize) -> Vec<Window> {
    let mut out = Vec::new();
    for join in 0..=n {
        for leave in join..=n + 1 {
            out.push(Window { filter, join, leave });
        }
    }
    out
}

/// Every publish sequence of length `n`, with or without redeliveries.
pub fn sequences(n: usize, redeliveries: bool) -> Vec<Vec<Step>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::new();
        for seq in &out {
            for p in 0..2 {
                let mut fresh = seq.clone();
                fresh.push(Step::Fresh(p));
                next.push(fresh);
                if redeliveries && seq.contains(&Step::Fresh(p)) {
                    let mut again = seq.clone();
                    again.push(Step::Again(p));
                    next.push(again);
                }
            }
        }
        out = next;
    }
    out
}

fn envelope(publisher: usize, seq: u64) -> Envelope {
    let p = PUBLISHERS[publisher];
    Envelope {
        message_id: format!("{p}-{seq}"),
        topic: Topic::up("s1", p).unwrap(),
        publisher: p.into(),
        seq,
        sent_at: seq as i64,
        body: Body::Status(StatusNotice::new("probe", "")),
    }
}

/// The envelopes a publish sequence sends, in order.
pub fn envelopes(steps: &[Step]) -> Vec<Envelope> {
    let mut last = [0u64; 2];
    steps
        .iter()
        .map(|step| match *step {
            Step::Fresh(p) => {
                last[p] += 1;
                envelope(p, last[p])
            }
            Step::Again(p) => envelope(p, last[p]),
        })
        .collect()
}

fn filters() -> Vec<TopicFilter> {
    FILTERS.iter().map(|f| TopicFilter::parse(f).unwrap()).collect()
}

/// Run one schedule and check each subscriber: it receives exactly the
/// matching envelopes published inside its window, each at least once, in
/// per-publisher seq order.
pub fn run_schedule(steps: &[Step], subs: &[Window]) -> Result<(), String> {
    run_prepared(&envelopes(steps), &filters(), subs)
}

fn run_prepared(sent: &[Envelope], filters: &[TopicFilter], subs: &[Window]) -> Result<(), String> {
    let broker = Broker::new();
    let mut live: Vec<Option<Subscription>> = subs.iter().map(|_| None).collect();
    let mut received: Vec<Vec<Envelope>> = subs.iter().map(|_| Vec::new()).collect();
    let mut expected: Vec<Vec<usize>> = subs.iter().map(|_| Vec::new()).collect();
    for t in 0..=sent.len() {
        for (i, w) in subs.iter().enumerate() {
            if w.leave == t {
                if let Some(s) = live[i].take() {
                    received[i].extend(s.drain());
                }
            }
            if w.join == t && w.leave > t {
                live[i] = Some(broker.subscribe(FILTERS[w.filter]).map_err(|e| e.to_string())?);
            }
        }
        let Some(e) = sent.get(t) else { break };
        let receipt = broker.publish(e).map_err(|err| format!("{err}"))?;
        let mut want = 0;
        for (i, w) in subs.iter().enumerate() {
            if w.join <= t && t < w.leave && filters[w.filter].matches(&e.topic) {
                expected[i].push(t);
                want += 1;
            }
        }
        if receipt.deliveries != want {
            return Err(format!("step {t}: {} deliveries, expected {want}", receipt.deliveries));
        }
    }
    for (i, s) in live.iter().enumerate() {
        if let Some(s) = s {
            received[i].extend(s.drain());
        }
    }
    for (i, got) in received.iter().enumerate() {
        let same = got.len() == expected[i].len() && got.iter().zip(&expected[i]).all(|(g, &t)| *g == sent[t]);
        if !same {
            let ids: Vec<&str> = got.iter().map(|e| e.message_id.as_str()).collect();
            let want: Vec<&str> = expected[i].iter().map(|&t| sent[t].message_id.as_str()).collect();
            return Err(format!("subscriber {i} {:?}: got {ids:?}, expected {want:?}", subs[i]));
        }
        for p in PUBLISHERS {
            let mut seqs = got.iter().filter(|e| e.publisher == p).map(|e| e.seq);
            let mut prev = 0;
            if seqs.any(|s| {
                let back = s < prev;
                prev = s;
                back
            }) {
                return Err(format!("subscriber {i}: {p} out of order"));
            }
        }
    }
    Ok(())
}

/// Full product: every sequence of up to `max_n` fresh publishes with every
/// choice of windows for up to `max_subs` (≤ 3) subscribers, subscriber `i`
/// using filter `i`. Returns the number of schedules.
pub fn exhaustive_product(max_n: usize, max_subs: usize) -> Result<usize, String> {
    fn extend(sent: &[Envelope], f: &[TopicFilter], chosen: &mut Vec<Window>, max_subs: usize, count: &mut usize) -> Result<(), String> {
        run_prepared(sent, f, chosen)?;
        *count += 1;
        if chosen.len() < max_subs {
            for w in windows(sent.len(), chosen.len()) {
                chosen.push(w);
                extend(sent, f, chosen, max_subs, count)?;
                chosen.pop();
            }
        }
        Ok(())
    }
    let f = filters();
    let mut count = 0;
    for n in 0..=max_n {
        for steps in sequences(n, false) {
            extend(&envelopes(&steps), &f, &mut Vec::new(), max_subs.min(FILTERS.len()), &mut count)?;
        }
    }
    Ok(count)
}

/// Sequences with redeliveries up to `max_n` publishes; every (filter,
/// window) subscriber appears in some three-subscriber schedule.
pub fn exhaustive_covering(max_n: usize) -> Result<usize, String> {
    let f = filters();
    let mut count = 0;
    for n in 0..=max_n {
        let all: Vec<Window> = (0..3).flat_map(|f| windows(n, f)).collect();
        for steps in sequences(n, true) {
            let sent = envelopes(&steps);
            for group in all.chunks(3) {
                run_prepared(&sent, &f, group)?;
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Sensor uploads from two participants; at most `n` of them.
pub struct UploadPlan {
    pub engine: Engine,
    pub sid: String,
    pub pids: Vec<String>,
}

pub fn fresh_engine(s: &Scenario) -> UploadPlan {
    let engine = Engine::new(
        EngineConfig { id_seed: Some(7), ..EngineConfig::default() },
        std::sync::Arc::new(pms_core::clock::ManualClock::new(s.period.start)),
    )
    .unwrap();
    let sid = engine.deploy(s.clone()).unwrap();
    engine.start(&sid).unwrap();
    let pids = (0..2)
        .map(|_| {
            let code = engine.joincode(&sid).unwrap();
            engine.join(&sid, &code.payload).unwrap().participant_id
        })
        .collect();
    UploadPlan { engine, sid, pids }
}

/// The i-th upload: alternating participants, each a photo at a checkpoint
/// so every one moves the ledger.
pub fn upload_envelope(s: &Scenario, plan: &UploadPlan, i: usize) -> Envelope {
    let pid = &plan.pids[i % 2];
    let cps = &s.motivation.static_requests;
    let cp = cps.iter().filter(|c| matches!(c.task, pms_core::scenario::TaskKind::Photo)).nth(0).unwrap();
    let seq = (i / 2 + 1) as u64;
    Envelope {
        message_id: format!("{pid}-{seq}"),
        topic: Topic::up(&plan.sid, pid).unwrap(),
        publisher: pid.clone(),
        seq,
        sent_at: s.period.start + i as i64,
        body: Body::Report(Upload {
            checkpoint_id: Some(cp.checkpoint_id.clone()),
            rule_id: None,
            position: Some(cp.fence.center),
            captured_at: s.period.start + 1000 * (i as i64 + 1),
            content: ReportContent::Photo { blob_ref: format!("{i:064x}"), caption: format!("shot {i}") },
        }),
    }
}

/// Every arrangement in which upload `i` arrives `counts[i]` times, first
/// arrivals in order, later copies anywhere after the first.
pub fn replay_orders(counts: &[usize]) -> Vec<Vec<usize>> {
    fn go(counts: &[usize], placed: &mut Vec<usize>, left: &mut Vec<usize>, next_first: usize, out: &mut Vec<Vec<usize>>) {
        if next_first == counts.len() && left.iter().all(|l| *l == 0) {
            out.push(placed.clone());
            return;
        }
        if next_first < counts.len() {
            placed.push(next_first);
            left[next_first] = counts[next_first] - 1;
            go(counts, placed, left, next_first + 1, out);
            left[next_first] = 0;
            placed.pop();
        }
        for i in 0..next_first {
            if left[i] > 0 {
                left[i] -= 1;
                placed.push(i);
                go(counts, placed, left, next_first, out);
                placed.pop();
                left[i] += 1;
            }
        }
    }
    let mut out = Vec::new();
    go(counts, &mut Vec::new(), &mut vec![0; counts.len()], 0, &mut out);
    out
}

/// Deliver uploads in `order` and return the resulting ledgers and digest.
/// A copy goes back through the broker when it is the publisher's latest
/// envelope, otherwise straight to the instance as a late redelivery.
pub fn deliver(s: &Scenario, order: &[usize]) -> (BTreeMap<String, ParticipantState>, String) {
    let plan = fresh_engine(s);
    let mut latest: BTreeMap<String, usize> = BTreeMap::new();
    for &i in order {
        let e = upload_envelope(s, &plan, i);
        let newest = latest.get(&e.publisher).is_none_or(|l| *l <= i);
        if newest {
            latest.insert(e.publisher.clone(), i);
            plan.engine.broker().publish(&e).unwrap();
            plan.engine.pump();
        } else {
            plan.engine.handle_upload(&plan.sid, &e).unwrap();
        }
    }
    (plan.engine.ledgers(&plan.sid).unwrap(), plan.engine.state_digest())
}

/// Compare every replay-heavy arrangement of `n` uploads, each arriving one
/// to `max_copies` times, against the replay-free run.
pub fn replay_equivalence(s: &Scenario, n: usize, max_copies: usize) -> Result<usize, String> {
    let baseline = deliver(s, &(0..n).collect::<Vec<_>>());
    let mut counts = vec![1; n];
    let mut checked = 0;
    loop {
        for order in replay_orders(&counts) {
            let got = deliver(s, &order);
            if got != baseline {
                return Err(format!("order {order:?} diverged"));
            }
            checked += 1;
        }
        let mut k = 0;
        while k < n && counts[k] == max_copies {
            counts[k] = 1;
            k += 1;
        }
        if k == n {
            return Ok(checked);
        }
        counts[k] += 1;
    }
}
