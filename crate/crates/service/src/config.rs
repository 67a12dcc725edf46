//! Service configuration: one TOML file, then environment overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::ApiError;

pub const ENV_DATA_DIR: &str = "PMS_DATA_DIR";
pub const ENV_BIND: &str = "PMS_BIND";
pub const ENV_TOKEN: &str = "PMS_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub data_dir: PathBuf,
    pub bind: String,
    /// Organizer bearer token. Without one the HTTP API is open.
    pub token: Option<String>,
    /// Broker authority written into join codes.
    pub endpoint: String,
    pub page_size: usize,
    pub pump_interval_ms: u64,
    pub supervise_interval_ms: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("pms-data"),
            bind: "127.0.0.1:8080".into(),
            token: None,
            endpoint: "localhost:1883".into(),
            page_size: 100,
            pump_interval_ms: 50,
            supervise_interval_ms: 1000,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ApiError> {
        let c: Config = toml::from_str(text).map_err(|e| ApiError::new("invalid config", e.message()))?;
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<(), ApiError> {
        if self.page_size == 0 {
            return Err(ApiError::new("invalid config", "page_size must be positive").at("page_size"));
        }
        if self.pump_interval_ms == 0 || self.supervise_interval_ms == 0 {
            return Err(ApiError::new("invalid config", "intervals must be positive"));
        }
        Ok(())
    }

    /// Read `file` (defaults when `None`) and apply overrides from `env`.
    pub fn load(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ApiError> {
        let mut c = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ApiError::new("unreadable file", format!("{}: {e}", p.display())))?;
                Config::parse(&text)?
            }
            None => Config::default(),
        };
        if let Some(v) = env(ENV_DATA_DIR) {
            c.data_dir = PathBuf::from(v);
        }
        if let Some(v) = env(ENV_BIND) {
            c.bind = v;
        }
        if let Some(v) = env(ENV_TOKEN) {
            c.token = Some(v).filter(|t| !t.is_empty());
        }
        Ok(c)
    }

    pub fn from_env(file: Option<&Path>) -> Result<Self, ApiError> {
        Self::load(file, |k| std::env::var(k).ok())
    }
}
