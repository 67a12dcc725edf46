//! End-to-end checks shared by the property tests and the acceptance suite.
//! Each returns `Err` with a description instead of panicking so callers can
//! report every criterion.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use pms_core::canonical::to_canonical_string;
use pms_core::clock::ManualClock;
use pms_core::data::{fold, DataStore, DatasetConfig, EditKind, EditOp, ExportFormat, Filters, ReportContent, Upload, Answer};
use pms_core::geo::Geofence;
use pms_core::motivation::DENIAL_CONTRIBUTION_LIMIT;
use pms_core::plane::{Body, Envelope, Topic};
use pms_core::runtime::{Engine, EngineConfig, SupervisorAction};
use pms_core::scenario::{ProcessingConfig, Scenario, SensorKind};
use pms_core::sim::{self, maps};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::{gen, oracle, xml_schema};

pub fn engine(s: &Scenario, seed: u64) -> (Engine, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(s.period.start));
    let e = Engine::new(EngineConfig { id_seed: Some(seed), ..EngineConfig::default() }, clock.clone()).unwrap();
    (e, clock)
}

fn running(s: &Scenario, seed: u64) -> (Engine, String) {
    let (e, _) = engine(s, seed);
    let sid = e.deploy(s.clone()).unwrap();
    e.start(&sid).unwrap();
    (e, sid)
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

/// Two simulated agents on the three-checkpoint map. Every stored checkpoint
/// report draws exactly one reward or denial, and the ledgers equal an
/// independent replay of the report log. Returns the reports checked.
pub fn reward_oracle(seed: u64, ticks: u64) -> Result<usize, String> {
    let s = maps::reference_three_checkpoint();
    let mut cfg = maps::mixed_crowd(seed, ticks as f64);
    cfg.agents.truncate(2);
    let (e, sid) = running(&s, seed);
    let down = e.broker().subscribe(&format!("pms/{sid}/down/+")).unwrap();
    sim::run(&e, &sid, &cfg).map_err(|err| err.to_string())?;

    let log = e.data().originals(&sid).unwrap();
    let at_checkpoints: BTreeSet<&str> =
        log.iter().filter(|r| r.checkpoint_id.is_some()).map(|r| r.report_id.as_str()).collect();
    check(!at_checkpoints.is_empty(), || format!("seed {seed}: no checkpoint reports"))?;

    let mut denied: BTreeMap<String, usize> = BTreeMap::new();
    let mut rewards: BTreeMap<String, u64> = BTreeMap::new();
    for env in down.drain() {
        match env.body {
            Body::RewardEvent(ev) => *rewards.entry(ev.participant_id).or_default() += 1,
            Body::Status(n) if n.code == DENIAL_CONTRIBUTION_LIMIT => {
                *denied.entry(n.in_reply_to.unwrap_or_default()).or_default() += 1;
            }
            _ => {}
        }
    }
    let total = rewards.values().sum::<u64>() as usize + denied.values().sum::<usize>();
    check(total == at_checkpoints.len(), || format!("{total} outcomes for {} checkpoint reports", at_checkpoints.len()))?;
    check(denied.iter().all(|(id, n)| *n == 1 && at_checkpoints.contains(id.as_str())), || {
        format!("denials do not map one-to-one onto reports: {denied:?}")
    })?;

    let want = oracle::replay(&s, &log);
    let ledgers = e.ledgers(&sid).unwrap();
    for (pid, l) in &want {
        let got = &ledgers[pid];
        check((got.points, got.level, &got.coupons) == (l.points, l.level, &l.coupons), || {
            format!("{pid}: engine {}/{}/{:?}, oracle {}/{}/{:?}", got.points, got.level, got.coupons, l.points, l.level, l.coupons)
        })?;
        let r = rewards.get(pid).copied().unwrap_or(0);
        check(r == l.rewards, || format!("{pid}: {r} rewards, oracle {}", l.rewards))?;
        let d = log.iter().filter(|r| &r.participant_id == pid && denied.contains_key(&r.report_id)).count() as u64;
        check(d == l.denials, || format!("{pid}: {d} denials, oracle {}", l.denials))?;
    }
    Ok(at_checkpoints.len())
}

/// Five answers at a checkpoint limited to three: three rewards then two
/// denials, all five stored and counted on the board. Returns
/// (rewards, denials, points).
pub fn contribution_limit() -> Result<(usize, usize, u64), String> {
    let s = maps::reference_three_checkpoint();
    let (e, sid) = running(&s, 5);
    let pid = e.join(&sid, &e.joincode(&sid).unwrap().payload).unwrap().participant_id;
    let down = e.broker().subscribe(&format!("pms/{sid}/down/{pid}")).unwrap();
    let cafe = s.checkpoint("cafe").unwrap();
    for i in 1..=5u64 {
        let env = Envelope {
            message_id: format!("{pid}-{i}"),
            topic: Topic::up(&sid, &pid).unwrap(),
            publisher: pid.clone(),
            seq: i,
            sent_at: 0,
            body: Body::Report(Upload {
                checkpoint_id: Some("cafe".into()),
                rule_id: None,
                position: Some(cafe.fence.center),
                captured_at: s.period.start + i as i64 * 1000,
                content: ReportContent::QuestionnaireAnswer {
                    answers: vec![Answer { node_id: "crowded".into(), answer: "no".into(), text: None }],
                },
            }),
        };
        e.broker().publish(&env).map_err(|err| err.to_string())?;
        e.pump();
    }
    let mut outcomes = Vec::new();
    for env in down.drain() {
        match env.body {
            Body::RewardEvent(_) => outcomes.push("reward"),
            Body::Status(n) if n.code == DENIAL_CONTRIBUTION_LIMIT => outcomes.push("denial"),
            _ => {}
        }
    }
    check(outcomes == ["reward", "reward", "reward", "denial", "denial"], || format!("outcomes {outcomes:?}"))?;
    let stored = e.data().report_count(&sid).unwrap();
    check(stored == 5, || format!("{stored} reports stored"))?;
    let board = e.task_board(&sid).unwrap().uploads("cafe");
    check(board == 5, || format!("board counts {board}"))?;
    let state = e.participant(&sid, &pid).unwrap();
    check(state.contributions_to("cafe") == 3, || format!("{} accepted", state.contributions_to("cafe")))?;
    Ok((3, 2, state.points))
}

/// Position samples along a random walk near one of a generated scenario's
/// dynamic rules trigger one task request per fence entry. Returns the number
/// of entries.
pub fn dynamic_entry(seed: u64) -> Result<usize, String> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let s = loop {
        let s = gen::scenario(&mut rng, "dyn");
        if !s.motivation.dynamic_rules.is_empty() {
            break s;
        }
    };
    let rules = &s.motivation.dynamic_rules;
    let target = rules[rng.random_range(0..rules.len())].fence;
    let around = Geofence::new(target.center, target.radius_m * 2.0);
    let path = gen::trajectory(&mut rng, &around, 80, target.radius_m * 0.6);

    let (e, sid) = running(&s, seed);
    let pid = e.join(&sid, &e.joincode(&sid).unwrap().payload).unwrap().participant_id;
    let down = e.broker().subscribe(&format!("pms/{sid}/down/{pid}")).unwrap();
    for (i, p) in path.iter().enumerate() {
        let env = Envelope {
            message_id: format!("m{i}"),
            topic: Topic::up(&sid, &pid).unwrap(),
            publisher: pid.clone(),
            seq: i as u64 + 1,
            sent_at: 0,
            body: Body::Report(Upload {
                checkpoint_id: None,
                rule_id: None,
                position: Some(*p),
                captured_at: s.period.start,
                content: ReportContent::SensorSample { sensor: SensorKind::Position, value: 0.0, unit: String::new() },
            }),
        };
        e.broker().publish(&env).map_err(|err| err.to_string())?;
    }
    e.pump();
    let got = down.drain().into_iter().filter(|m| matches!(m.body, Body::TaskRequest(_))).count();
    let fences: Vec<Geofence> = rules.iter().map(|r| r.fence).collect();
    let want = oracle::entries(&path, &fences);
    check(got == want, || format!("seed {seed}: {got} requests, {want} entries"))?;
    Ok(want)
}

/// Fail the instance after tick `crash_at`, let the supervisor restart it
/// from storage and finish the run: the outcome matches an uninterrupted one.
pub fn crash_recovery(seed: u64, duration_s: f64, crash_at: u64) -> Result<(), String> {
    let s = maps::reference_three_checkpoint();
    let cfg = maps::mixed_crowd(seed, duration_s);
    let (control, sid) = running(&s, seed);
    let expected = sim::run(&control, &sid, &cfg).map_err(|err| err.to_string())?;

    let (crashy, _) = running(&s, seed);
    let mut actions = Vec::new();
    let got = sim::run_observed(&crashy, &sid, &cfg, |k| {
        if k == crash_at {
            crashy.fail(&sid).unwrap();
            actions = crashy.supervise();
        }
    })
    .map_err(|err| err.to_string())?;
    check(actions == [(sid.clone(), SupervisorAction::Restart)], || format!("supervisor did {actions:?}"))?;
    check(got == expected, || format!("crash at {crash_at}: run diverged"))?;
    check(crashy.ledgers(&sid).unwrap() == control.ledgers(&sid).unwrap(), || "ledgers differ".into())?;
    check(crashy.task_board(&sid).unwrap() == control.task_board(&sid).unwrap(), || "boards differ".into())?;
    check(crashy.data().view(&sid).unwrap() == control.data().view(&sid).unwrap(), || "data differs".into())?;
    let restarts = crashy.status(&sid).unwrap().restarts;
    check(restarts == 1, || format!("{restarts} restarts"))
}

fn open_dataset(s: &Scenario, dir: Option<&Path>) -> DataStore {
    let store = match dir {
        Some(d) => DataStore::open(d).unwrap(),
        None => DataStore::in_memory(),
    };
    let config = DatasetConfig {
        processing: ProcessingConfig { editing: true, browsing: true, export: true },
        ..DatasetConfig::for_scenario(s)
    };
    store.register(&s.scenario_id, config).unwrap();
    store
}

fn random_edit(rng: &mut SplitMix64, ids: &[String], i: usize) -> EditOp {
    let kind = [EditKind::AddLabel, EditKind::RemoveLabel, EditKind::Exclude, EditKind::Include, EditKind::Annotate]
        [rng.random_range(0..5)];
    EditOp {
        op_id: format!("op{i}"),
        at: i as i64,
        kind,
        target: ids[rng.random_range(0..ids.len())].clone(),
        arg: kind.needs_arg().then(|| gen::text(rng)),
    }
}

/// A random edit sequence over a random dataset: originals never change, the
/// view equals the fold of the log at every step, reopening a persisted store
/// gives the same view, and restore returns the exact original bytes.
pub fn edit_sequence(seed: u64, max_len: usize, dir: Option<&Path>) -> Result<usize, String> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let s = gen::scenario(&mut rng, "edits");
    let n = rng.random_range(1..30);
    let rows = gen::dataset(&mut rng, &s.scenario_id, s.period, n);
    let store = open_dataset(&s, dir);
    for r in &rows {
        store.append_report(r.clone()).map_err(|err| err.to_string())?;
    }
    let sid = s.scenario_id.as_str();
    let original_bytes = to_canonical_string(&store.originals(sid).unwrap()).unwrap();
    let ids: Vec<String> = rows.iter().map(|r| r.report_id.clone()).collect();
    let len = rng.random_range(0..=max_len);
    let mut log = Vec::new();
    for i in 0..len {
        let op = random_edit(&mut rng, &ids, i);
        store.apply_edit(sid, op.clone()).map_err(|err| err.to_string())?;
        log.push(op);
        check(to_canonical_string(&store.originals(sid).unwrap()).unwrap() == original_bytes, || {
            format!("seed {seed}: originals changed at edit {i}")
        })?;
        check(store.view(sid).unwrap() == fold(&rows, &log), || format!("seed {seed}: view is not the fold at edit {i}"))?;
    }
    if let Some(d) = dir {
        let again = open_dataset(&s, Some(d));
        check(again.view(sid).unwrap() == store.view(sid).unwrap(), || format!("seed {seed}: reopened view differs"))?;
        check(again.edit_log(sid).unwrap() == log, || format!("seed {seed}: reopened edit log differs"))?;
    }
    let reverted = store.restore(sid).map_err(|err| err.to_string())?;
    check(reverted == len, || format!("seed {seed}: restore reverted {reverted} of {len}"))?;
    let restored = to_canonical_string(&store.view(sid).unwrap()).unwrap();
    check(restored == original_bytes, || format!("seed {seed}: restore is not byte-identical"))?;
    if let Some(d) = dir {
        let again = open_dataset(&s, Some(d));
        check(to_canonical_string(&again.view(sid).unwrap()).unwrap() == original_bytes, || {
            format!("seed {seed}: restore did not persist")
        })?;
    }
    Ok(len)
}

/// Export a random dataset in every format: GPX and KML validate with one
/// point per positioned row, CSV has one record per row, and the JSON export
/// imports into a fresh store unchanged. Returns the rows exported.
pub fn export_roundtrip(seed: u64) -> Result<usize, String> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let s = gen::scenario(&mut rng, "exp");
    let n = rng.random_range(0..60);
    let mut rows = gen::dataset(&mut rng, &s.scenario_id, s.period, n);
    if let Some(r) = rows.first_mut() {
        r.annotation = Some("bell\u{7} and \u{FFFE}".into());
        r.labels.insert("tab\there".into());
    }
    let store = open_dataset(&s, None);
    for r in &rows {
        store.append_report(r.clone()).unwrap();
    }
    let sid = s.scenario_id.as_str();
    let all = Filters { include_excluded: true, ..Filters::default() };
    let visible = store.query(sid, &Filters::default()).unwrap();
    let positioned = visible.iter().filter(|r| r.position.is_some()).count();
    let export = |f: ExportFormat, filters: &Filters| store.export(sid, f, filters).unwrap();

    let gpx = String::from_utf8(export(ExportFormat::Gpx, &Filters::default())).map_err(|e| e.to_string())?;
    let points = xml_schema::validate_gpx(&gpx).map_err(|e| format!("seed {seed}: GPX {e}"))?;
    check(points == positioned, || format!("seed {seed}: {points} trkpts for {positioned} positioned rows"))?;

    let kml = String::from_utf8(export(ExportFormat::Kml, &Filters::default())).map_err(|e| e.to_string())?;
    let marks = xml_schema::validate_kml(&kml).map_err(|e| format!("seed {seed}: KML {e}"))?;
    check(marks == positioned, || format!("seed {seed}: {marks} placemarks for {positioned} positioned rows"))?;

    let csv_bytes = export(ExportFormat::Csv, &Filters::default());
    let mut reader = csv::Reader::from_reader(csv_bytes.as_slice());
    let records: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    check(records.len() == visible.len(), || format!("seed {seed}: {} CSV records for {} rows", records.len(), visible.len()))?;
    for (rec, r) in records.iter().zip(&visible) {
        check(rec.len() == 8 && rec[0] == r.report_id && rec[1] == r.participant_id, || {
            format!("seed {seed}: CSV record {rec:?} does not match {}", r.report_id)
        })?;
    }

    let json = export(ExportFormat::Json, &all);
    let fresh = open_dataset(&s, None);
    let n = fresh.import(sid, &json).map_err(|e| format!("seed {seed}: import {e}"))?;
    check(n == rows.len(), || format!("seed {seed}: imported {n} of {}", rows.len()))?;
    let mut expected = rows.clone();
    expected.sort_by_key(|r| r.captured_at);
    check(fresh.originals(sid).unwrap() == expected, || format!("seed {seed}: import changed rows"))?;
    check(fresh.export(sid, ExportFormat::Json, &all).unwrap() == json, || format!("seed {seed}: re-export differs"))?;
    Ok(rows.len())
}
