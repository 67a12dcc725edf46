//! Deterministic agent-based participant simulator.
//!
//! Agents join through join codes, publish every upload on their uplink topic
//! and read task requests from their downlink topic, exactly like a client.
//! Nothing is written to the engine except through the message plane.
//!
//! All randomness comes from SplitMix64 (`rand_xoshiro::SplitMix64`): a master
//! generator seeded with `SimConfig::seed` hands one `next_u64` to each agent
//! in configuration order, and that value seeds the agent's own generator.

mod agent;
pub mod maps;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::ManualClock;
use crate::geo::haversine_m;
use crate::motivation::{ParticipantState, DENIAL_CONTRIBUTION_LIMIT};
use crate::plane::{Body, Envelope, Topic};
use crate::runtime::{Engine, EngineConfig, EngineError, Phase};
use crate::scenario::Scenario;

pub use agent::{baseline, response_probability, Agent, AgentProfile, Movement, World, MAX_SPEED_MPS};

fn default_tick() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    #[serde(default = "default_tick")]
    pub tick_s: f64,
    pub duration_s: f64,
    pub agents: Vec<AgentProfile>,
}

impl SimConfig {
    pub fn check(&self) -> Result<(), SimError> {
        let bad = |why: String| Err(SimError::InvalidConfig(why));
        if !(self.tick_s > 0.0) {
            return bad(format!("tick_s must be positive, got {}", self.tick_s));
        }
        if !(self.duration_s >= self.tick_s) {
            return bad(format!("duration_s {} is shorter than one tick", self.duration_s));
        }
        let mut ids = std::collections::BTreeSet::new();
        for a in &self.agents {
            if !(a.speed_mps > 0.0 && a.speed_mps <= MAX_SPEED_MPS) {
                return bad(format!("agent {} speed {} outside (0, {MAX_SPEED_MPS}]", a.agent_id, a.speed_mps));
            }
            if !(a.response_dmax_m > 0.0) {
                return bad(format!("agent {} response_dmax_m must be positive", a.agent_id));
            }
            if a.sensor_noise.values().any(|sd| !(*sd >= 0.0)) {
                return bad(format!("agent {} has a negative noise level", a.agent_id));
            }
            if !ids.insert(a.agent_id.as_str()) {
                return bad(format!("duplicate agent id {}", a.agent_id));
            }
        }
        Ok(())
    }

    pub fn ticks(&self) -> u64 {
        (self.duration_s / self.tick_s + 1e-9).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResult {
    pub agent_id: String,
    pub participant_id: String,
    pub state: ParticipantState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Accepted uploads per checkpoint, every checkpoint listed.
    pub uploads: BTreeMap<String, u64>,
    pub coverage: f64,
    pub agents: Vec<AgentResult>,
    /// Uploads sent by the agents.
    pub emitted: u64,
    /// Uploads the engine answered with a rejection.
    pub rejected: u64,
    /// `agent_id,t,lat,lon` with a header row.
    pub trajectory_csv: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("scenario {0} is not running")]
    NotRunning(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl SimError {
    /// Codes of its own; `Engine` delegates.
    pub const CODES: &'static [&'static str] = &["invalid sim config", "scenario stopped"];

    pub fn code(&self) -> &'static str {
        match self {
            SimError::InvalidConfig(_) => "invalid sim config",
            SimError::NotRunning(_) => "scenario stopped",
            SimError::Engine(e) => e.code(),
        }
    }
}

pub fn coverage(uploads: &BTreeMap<String, u64>) -> f64 {
    if uploads.is_empty() {
        return 0.0;
    }
    uploads.values().filter(|n| **n > 0).count() as f64 / uploads.len() as f64
}

struct Driver {
    agent: Agent,
    participant_id: String,
    seq: u64,
    down: crate::plane::Subscription,
}

impl Driver {
    /// Read downlinks: queue task requests, count rejections.
    fn absorb(&mut self) -> u64 {
        let mut rejected = 0;
        for e in self.down.drain() {
            match e.body {
                Body::TaskRequest(req) => self.agent.pending.push(req),
                Body::Status(s) if s.in_reply_to.is_some() && s.code != DENIAL_CONTRIBUTION_LIMIT => rejected += 1,
                _ => {}
            }
        }
        rejected
    }
}

/// Drive all agents against a running scenario on `engine`.
pub fn run(engine: &Engine, scenario_id: &str, cfg: &SimConfig) -> Result<SimResult, SimError> {
    run_observed(engine, scenario_id, cfg, |_| {})
}

/// Like [`run`], calling `after_tick(k)` once tick `k` has been pumped.
pub fn run_observed(
    engine: &Engine,
    scenario_id: &str,
    cfg: &SimConfig,
    mut after_tick: impl FnMut(u64),
) -> Result<SimResult, SimError> {
    cfg.check()?;
    if engine.status(scenario_id)?.state != Phase::Running {
        return Err(SimError::NotRunning(scenario_id.to_string()));
    }
    let scenario = engine.scenario(scenario_id)?;
    let mut master = SplitMix64::seed_from_u64(cfg.seed);
    let mut drivers = Vec::with_capacity(cfg.agents.len());
    for profile in &cfg.agents {
        let rng = SplitMix64::seed_from_u64(master.next_u64());
        let code = engine.joincode(scenario_id)?;
        let ack = engine.join(scenario_id, &code.payload)?;
        let down = engine
            .broker()
            .subscribe(&format!("pms/{scenario_id}/down/{}", ack.participant_id))
            .expect("engine-issued participant id");
        drivers.push(Driver {
            agent: Agent::new(profile.clone(), &scenario, rng),
            participant_id: ack.participant_id,
            seq: 0,
            down,
        });
    }

    let mut trajectory = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    trajectory.write_record(["agent_id", "t", "lat", "lon"]).expect("in-memory write");
    let mut log = |id: &str, t: f64, lat: f64, lon: f64| {
        trajectory.write_record([id, &t.to_string(), &lat.to_string(), &lon.to_string()]).expect("in-memory write");
    };
    for d in &drivers {
        log(&d.agent.profile.agent_id, 0.0, d.agent.position.lat, d.agent.position.lon);
    }

    let (mut emitted, mut rejected) = (0u64, 0u64);
    for k in 1..=cfg.ticks() {
        let t = k as f64 * cfg.tick_s;
        let captured_at = scenario.period.start + (t * 1000.0).round() as i64;
        let board = engine.task_board(scenario_id)?;
        for d in &mut drivers {
            rejected += d.absorb();
            let world = World {
                scenario: &scenario,
                board: &board,
                participant_id: &d.participant_id,
                t,
                tick_s: cfg.tick_s,
                captured_at,
            };
            let uploads = d.agent.step(&world);
            log(&d.agent.profile.agent_id, t, d.agent.position.lat, d.agent.position.lon);
            for u in uploads {
                d.seq += 1;
                let e = Envelope {
                    message_id: format!("{}-{}", d.participant_id, d.seq),
                    topic: Topic::up(scenario_id, &d.participant_id).expect("engine-issued participant id"),
                    publisher: d.participant_id.clone(),
                    seq: d.seq,
                    sent_at: captured_at,
                    body: Body::Report(u),
                };
                engine.broker().publish(&e).map_err(EngineError::from)?;
                emitted += 1;
            }
        }
        engine.pump();
        after_tick(k);
    }
    for d in &mut drivers {
        rejected += d.absorb();
    }

    let board = engine.task_board(scenario_id)?;
    let uploads: BTreeMap<String, u64> = scenario
        .motivation
        .static_requests
        .iter()
        .map(|c| (c.checkpoint_id.clone(), board.uploads(&c.checkpoint_id)))
        .collect();
    let mut agents = Vec::with_capacity(drivers.len());
    for d in &drivers {
        agents.push(AgentResult {
            agent_id: d.agent.profile.agent_id.clone(),
            participant_id: d.participant_id.clone(),
            state: engine.participant(scenario_id, &d.participant_id)?,
        });
    }
    drop(log);
    let bytes = trajectory.into_inner().expect("in-memory flush");
    let trajectory_csv = String::from_utf8(bytes).expect("utf-8 csv");
    Ok(SimResult { coverage: coverage(&uploads), uploads, agents, emitted, rejected, trajectory_csv })
}

/// Deploy `scenario` on a fresh in-memory engine whose ids derive from the
/// config seed, run it, and return the result. Identical inputs give
/// identical results.
pub fn run_fresh(scenario: &Scenario, cfg: &SimConfig) -> Result<SimResult, SimError> {
    let engine = Engine::new(
        EngineConfig { id_seed: Some(cfg.seed), ..EngineConfig::default() },
        Arc::new(ManualClock::new(scenario.period.start)),
    )?;
    let sid = engine.deploy(scenario.clone())?;
    engine.start(&sid)?;
    run(&engine, &sid, cfg)
}

/// Run every config on its own engine, one after another.
pub fn sweep_sequential(scenario: &Scenario, configs: &[SimConfig]) -> Vec<Result<SimResult, SimError>> {
    configs.iter().map(|c| run_fresh(scenario, c)).collect()
}

/// Run every config on its own engine, in parallel when the `parallel`
/// feature is on. Results are in config order either way.
pub fn sweep(scenario: &Scenario, configs: &[SimConfig]) -> Vec<Result<SimResult, SimError>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        configs.par_iter().map(|c| run_fresh(scenario, c)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        sweep_sequential(scenario, configs)
    }
}

/// Largest distance between consecutive trajectory points of one agent.
pub fn max_step_m(trajectory_csv: &str) -> f64 {
    let mut last: BTreeMap<String, crate::geo::GeoPoint> = BTreeMap::new();
    let mut worst: f64 = 0.0;
    let mut rdr = csv::Reader::from_reader(trajectory_csv.as_bytes());
    for row in rdr.records().map_while(Result::ok) {
        let (Ok(lat), Ok(lon)) = (row[2].parse::<f64>(), row[3].parse::<f64>()) else { continue };
        let p = crate::geo::GeoPoint::new(lat, lon);
        if let Some(prev) = last.insert(row[0].to_string(), p) {
            worst = worst.max(haversine_m(&prev, &p));
        }
    }
    worst
}
