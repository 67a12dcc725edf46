//! Join codes: `parmosense://<host>/<scenario_id>?t=<token>`.
//!
//! The endpoint is an authority (`host` or `host:port`). The scenario id is
//! percent-encoded; the token is 32 lowercase hex digits and single-use.

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Scenario;
use crate::ids::IdGen;

pub const SCHEME: &str = "parmosense://";

const SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.').remove(b'~');

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinCode {
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinCodeParts {
    pub endpoint: String,
    pub scenario_id: String,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JoinCodeError {
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("malformed join code: {0}")]
    Malformed(String),
}

impl JoinCodeError {
    pub const CODES: &'static [&'static str] = &["invalid endpoint", "malformed join code"];

    pub fn code(&self) -> &'static str {
        match self {
            JoinCodeError::InvalidEndpoint(_) => "invalid endpoint",
            JoinCodeError::Malformed(_) => "malformed join code",
        }
    }
}

fn check_endpoint(endpoint: &str) -> Result<(), JoinCodeError> {
    let bad = || JoinCodeError::InvalidEndpoint(endpoint.to_string());
    if endpoint.is_empty() || endpoint.contains(['/', '?', '#', '@']) || endpoint.chars().any(char::is_whitespace) {
        return Err(bad());
    }
    let url = url::Url::parse(&format!("http://{endpoint}/")).map_err(|_| bad())?;
    if url.host_str().is_none() {
        return Err(bad());
    }
    Ok(())
}

pub fn generate_join_code(s: &Scenario, endpoint: &str) -> Result<JoinCode, JoinCodeError> {
    generate_join_code_with(s, endpoint, &IdGen::random())
}

pub fn generate_join_code_with(s: &Scenario, endpoint: &str, ids: &IdGen) -> Result<JoinCode, JoinCodeError> {
    check_endpoint(endpoint)?;
    let sid = utf8_percent_encode(&s.scenario_id, SEGMENT);
    Ok(JoinCode { payload: format!("{SCHEME}{endpoint}/{sid}?t={}", ids.hex128()) })
}

pub fn decode_join_code(payload: &str) -> Result<JoinCodeParts, JoinCodeError> {
    let bad = |why: &str| JoinCodeError::Malformed(why.to_string());
    let rest = payload.strip_prefix(SCHEME).ok_or_else(|| bad("wrong scheme"))?;
    let (endpoint, rest) = rest.split_once('/').ok_or_else(|| bad("missing scenario"))?;
    let (sid, token) = rest.split_once("?t=").ok_or_else(|| bad("missing token"))?;
    check_endpoint(endpoint).map_err(|_| bad("bad endpoint"))?;
    if sid.is_empty() || sid.contains('/') {
        return Err(bad("bad scenario segment"));
    }
    if token.len() != 32 || !token.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err(bad("bad token"));
    }
    let scenario_id = percent_decode_str(sid)
        .decode_utf8()
        .map_err(|_| bad("scenario id is not UTF-8"))?
        .into_owned();
    Ok(JoinCodeParts {
        endpoint: endpoint.to_string(),
        scenario_id,
        token: token.to_string(),
    })
}
