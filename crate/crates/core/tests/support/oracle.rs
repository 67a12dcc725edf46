//! Reference computations written without the engine's motivation code.
#![allow(dead_code)]

use std::collections::BTreeMap;

use pms_core::data::Report;
use pms_core::geo::{GeoPoint, Geofence};
use pms_core::scenario::{CouponTrigger, Scenario};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    pub points: u64,
    pub level: u64,
    pub coupons: Vec<String>,
    pub rewards: u64,
    pub denials: u64,
}

/// Replay a report log in storage order and recompute every participant's
/// points, level, coupons, reward count and denial count.
pub fn replay(s: &Scenario, log: &[Report]) -> BTreeMap<String, Ledger> {
    let policy = &s.motivation.reward;
    let mut uploads: BTreeMap<&str, u64> = BTreeMap::new();
    let mut accepted: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    let mut out: BTreeMap<String, Ledger> = BTreeMap::new();
    for r in log {
        let Some(cp) = r.checkpoint_id.as_deref().and_then(|id| s.checkpoint(id)) else { continue };
        let cid = cp.checkpoint_id.as_str();
        let pid = r.participant_id.as_str();
        let l = out.entry(pid.to_string()).or_default();
        let done = accepted.get(&(cid, pid)).copied().unwrap_or(0);
        if cp.contribution_limit.is_some_and(|lim| done >= lim as u64) {
            l.denials += 1;
        } else {
            let weight = if policy.points_enabled && policy.demand_weighting_enabled {
                let top = uploads.values().copied().max().unwrap_or(0).max(1) as f64;
                let mine = uploads.get(cid).copied().unwrap_or(0) as f64;
                1.0 + policy.weighting_alpha * (1.0 - mine / top)
            } else {
                1.0
            };
            if policy.points_enabled {
                l.points += (cp.base_points as f64 * weight).round() as u64;
            }
            *accepted.entry((cid, pid)).or_default() += 1;
            l.rewards += 1;
            for c in &policy.coupons {
                let hit = match &c.trigger {
                    CouponTrigger::Points { threshold } => policy.points_enabled && l.points >= *threshold,
                    CouponTrigger::Checkpoint { checkpoint_id } => checkpoint_id == cid,
                };
                if hit && !l.coupons.contains(&c.coupon_id) {
                    l.coupons.push(c.coupon_id.clone());
                }
            }
        }
        *uploads.entry(cid).or_default() += 1;
    }
    for l in out.values_mut() {
        l.level = l.points / policy.level_threshold_points + 1;
    }
    out
}

/// Outside→inside transitions of each fence along a path, counting a first
/// point that is already inside.
pub fn entries(path: &[GeoPoint], fences: &[Geofence]) -> usize {
    let inside = |p: &GeoPoint, f: &Geofence| {
        let (la1, la2) = (p.lat.to_radians(), f.center.lat.to_radians());
        let dla = la2 - la1;
        let dlo = (f.center.lon - p.lon).to_radians();
        let h = (dla / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlo / 2.0).sin().powi(2);
        2.0 * 6_371_000.0 * h.sqrt().asin() <= f.radius_m
    };
    fences
        .iter()
        .map(|f| {
            let mut was = false;
            let mut n = 0;
            for p in path {
                let now = inside(p, f);
                if now && !was {
                    n += 1;
                }
                was = now;
            }
            n
        })
        .sum()
}
