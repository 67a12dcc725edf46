#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pms_core::runtime::Engine;
use pms_core::scenario::{Scenario, TaskKind};
use pms_core::sim::maps;
use pms_service::config::Config;
use pms_service::ops;
use serde_json::Value;
use tower::ServiceExt;

pub fn ref3() -> Scenario {
    let mut s = maps::reference_three_checkpoint();
    s.motivation.reward.ranking_enabled = true;
    s
}

/// The reference scenario with its questionnaire looping back to the entry.
pub fn cyclic() -> Scenario {
    let mut s = ref3();
    for c in &mut s.motivation.static_requests {
        if let TaskKind::Questionnaire { entry, nodes } = &mut c.task {
            let back = Some(entry.clone());
            nodes.last_mut().unwrap().next.insert("*".into(), back);
        }
    }
    s
}

pub fn write_doc(dir: &Path, name: &str, s: &Scenario) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(s).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

pub struct CliRun {
    pub code: i32,
    pub out: String,
    pub err: String,
}

pub fn cli(data_dir: &Path, args: &[&str]) -> CliRun {
    let mut argv = vec!["pms", "--data-dir", data_dir.to_str().unwrap()];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = pms_service::cli::run(argv, &mut out, &mut err);
    CliRun { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

pub fn config(data_dir: &Path, token: Option<&str>) -> Config {
    Config { data_dir: data_dir.to_path_buf(), token: token.map(str::to_string), ..Config::default() }
}

pub fn app(data_dir: &Path, token: Option<&str>) -> (Arc<Engine>, Router) {
    let cfg = config(data_dir, token);
    let engine = Arc::new(ops::open_engine(&cfg).unwrap());
    (engine.clone(), pms_service::http::router(engine, cfg))
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.bytes)))
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<String>, token: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let content_type = res.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, content_type, bytes }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None, None).await
}

pub async fn post(app: &Router, uri: &str, body: Option<String>) -> Reply {
    call(app, Method::POST, uri, body, None).await
}
