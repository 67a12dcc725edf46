//! Engine for scenario-driven participatory mobile sensing campaigns.
//!
//! An organizer describes a campaign as a declarative [`scenario::Scenario`].
//! The [`runtime::Engine`] deploys one isolated instance per scenario, talks to
//! participants over the in-process pub/sub [`plane::Broker`], runs the
//! [`motivation`] rules on every accepted upload and hands reports to the
//! [`data`] manager for editing, browsing and export. The [`sim`] module drives
//! simulated participants through the same message plane, and [`metrics`]
//! computes preparation-workload and function-score comparisons.

pub mod canonical;
pub mod clock;
pub mod data;
pub mod geo;
pub mod ids;
pub mod metrics;
pub mod motivation;
pub mod plane;
pub mod runtime;
pub mod scenario;
pub mod sim;

pub use geo::{haversine_m, inside, GeoPoint, Geofence};
pub use runtime::{Engine, EngineConfig, EngineError};
pub use scenario::{parse_scenario, validate_scenario, Scenario};
