//! HTTP and WebSocket surface over one shared engine.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pms_core::plane::{Kind, SubscriptionId};
use pms_core::runtime::Engine;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tokio::sync::mpsc;

use crate::config::Config;
use crate::error::ApiError;
use crate::ops::{self, EditRequest, ReportQuery, SimRequest};

pub struct AppState {
    pub engine: Arc<Engine>,
    pub config: Config,
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ApiError>;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn utf8(body: Bytes) -> ApiResult<String> {
    String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("body is not UTF-8"))
}

pub fn router(engine: Arc<Engine>, config: Config) -> Router {
    let state = Arc::new(AppState { engine, config });
    let api = Router::new()
        .route("/scenarios", get(list).post(deploy))
        .route("/scenarios/validate", post(validate))
        .route("/scenarios/{id}", get(show).delete(remove))
        .route("/scenarios/{id}/start", post(start))
        .route("/scenarios/{id}/stop", post(stop))
        .route("/scenarios/{id}/status", get(status))
        .route("/scenarios/{id}/joincode", get(joincode))
        .route("/scenarios/{id}/reports", get(reports))
        .route("/scenarios/{id}/edits", post(edit))
        .route("/scenarios/{id}/restore", post(restore))
        .route("/scenarios/{id}/export", get(export))
        .route("/scenarios/{id}/import", post(import))
        .route("/scenarios/{id}/ranking", get(ranking))
        .route("/scenarios/{id}/board", get(board))
        .route("/scenarios/{id}/stream", get(stream))
        .route("/sim/run", post(sim_run))
        .route("/metrics/table", get(metrics_table))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth));
    Router::new()
        .route("/health", get(|| async { Json(json!({ "ok": true })) }))
        .merge(api)
        .fallback(|| async { ApiError::not_found("no such route") })
        .with_state(state)
}

fn query_token(query: Option<&str>) -> Option<&str> {
    query?.split('&').find_map(|kv| kv.strip_prefix("token="))
}

/// Bearer token check. Browsers cannot set headers on a WebSocket, so the
/// stream also accepts `?token=`.
async fn auth(State(st): State<Shared>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.config.token {
        let bearer = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        let streamed = req.uri().path().ends_with("/stream").then(|| query_token(req.uri().query())).flatten();
        if bearer != Some(token.as_str()) && streamed != Some(token.as_str()) {
            return ApiError::new("unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

async fn list(State(st): State<Shared>) -> Json<Value> {
    Json(serde_json::to_value(st.engine.list()).expect("summaries serialize"))
}

async fn deploy(State(st): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let sid = st.engine.deploy_document(&utf8(body)?)?;
    let status = st.engine.status(&sid)?;
    Ok((StatusCode::CREATED, Json(json!({ "scenario_id": sid, "status": status })) ).into_response())
}

async fn validate(body: Bytes) -> ApiResult<Json<Value>> {
    let violations = ops::validate_document(&utf8(body)?)?;
    let details: Vec<ApiError> = violations.iter().map(ApiError::from).collect();
    Ok(Json(json!({ "valid": details.is_empty(), "violations": details })))
}

async fn show(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(st.engine.scenario(&id)?).expect("scenario serializes")))
}

async fn remove(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    st.engine.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

fn status_body(id: &str, s: pms_core::runtime::InstanceStatus) -> Json<Value> {
    Json(json!({ "scenario_id": id, "state": s.state, "since": s.since, "restarts": s.restarts }))
}

async fn start(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(status_body(&id, st.engine.start(&id)?))
}

async fn stop(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(status_body(&id, st.engine.stop(&id)?))
}

async fn status(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(status_body(&id, st.engine.status(&id)?))
}

async fn joincode(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!({ "scenario_id": id, "payload": st.engine.joincode(&id)?.payload })))
}

type Pairs = Result<Query<BTreeMap<String, String>>, axum::extract::rejection::QueryRejection>;

fn pairs(q: Pairs) -> ApiResult<BTreeMap<String, String>> {
    q.map(|Query(m)| m).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn reports(State(st): State<Shared>, Path(id): Path<String>, q: Pairs) -> ApiResult<Json<ops::Page>> {
    let q = ReportQuery::from_pairs(pairs(q)?)?;
    Ok(Json(ops::query_page(&st.engine, &id, &q, st.config.page_size)?))
}

async fn edit(State(st): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: EditRequest = parse_json(&body)?;
    let s = ops::edit(&st.engine, &id, req)?;
    Ok(Json(json!({ "op_id": s.op_id, "log_len": s.log_len, "report": s.report })))
}

async fn restore(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!({ "scenario_id": id, "reverted": st.engine.restore(&id)? })))
}

async fn export(State(st): State<Shared>, Path(id): Path<String>, q: Pairs) -> ApiResult<Response> {
    let mut pairs = pairs(q)?;
    let format = pairs.remove("format").ok_or_else(|| ApiError::new("unsupported format", "format is required").at("format"))?;
    let (format, bytes) = ops::export(&st.engine, &id, &format, &ReportQuery::from_pairs(pairs)?)?;
    Ok(([(header::CONTENT_TYPE, format.content_type())], bytes).into_response())
}

async fn import(State(st): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    Ok(Json(json!({ "scenario_id": id, "imported": st.engine.import(&id, &body)? })))
}

async fn ranking(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(st.engine.ranking(&id)?).expect("ranking serializes")))
}

async fn board(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(st.engine.task_board(&id)?).expect("board serializes")))
}

async fn sim_run(State(st): State<Shared>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: SimRequest = parse_json(&body)?;
    let engine = st.engine.clone();
    let r = tokio::task::spawn_blocking(move || ops::sim_run(&engine, &req))
        .await
        .map_err(|e| ApiError::new("internal error", e.to_string()))??;
    Ok(Json(serde_json::to_value(r).expect("results serialize")))
}

async fn metrics_table() -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(ops::metrics_table(None)?).expect("rows serialize")))
}

/// Kinds forwarded to dashboard streams.
pub const STREAMED: [Kind; 3] = [Kind::MapPin, Kind::TimelineEntry, Kind::RewardEvent];

/// Subscribes before answering the upgrade, so nothing published after the
/// client sees the handshake is missed.
async fn stream(State(st): State<Shared>, Path(id): Path<String>, ws: WebSocketUpgrade) -> ApiResult<Response> {
    st.engine.status(&id)?;
    let (tx, rx) = mpsc::unbounded_channel::<String>();
    let sub = st
        .engine
        .broker()
        .subscribe_with(&format!("pms/{id}/down/+"), move |e| {
            if STREAMED.contains(&e.kind()) {
                tx.send(e.to_wire()).is_ok()
            } else {
                !tx.is_closed()
            }
        })
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let engine = st.engine.clone();
    Ok(ws.on_upgrade(move |socket| forward(socket, rx, engine, sub)))
}

async fn forward(mut socket: WebSocket, mut rx: mpsc::UnboundedReceiver<String>, engine: Arc<Engine>, sub: SubscriptionId) {
    loop {
        tokio::select! {
            next = rx.recv() => match next {
                Some(text) => {
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
        }
    }
    engine.broker().unsubscribe(sub);
}

/// Pump the message plane and supervise instances until the runtime stops.
pub fn spawn_driver(engine: Arc<Engine>, pump_every: Duration, supervise_every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut pump = tokio::time::interval(pump_every);
        let mut supervise = tokio::time::interval(supervise_every);
        loop {
            tokio::select! {
                _ = pump.tick() => {
                    engine.pump();
                }
                _ = supervise.tick() => {
                    for (sid, action) in engine.supervise() {
                        tracing::warn!(scenario = %sid, ?action, "supervisor acted on a failed instance");
                    }
                }
            }
        }
    })
}

pub async fn serve(cfg: Config, out: &mut dyn Write) -> ApiResult<()> {
    if cfg.token.is_none() {
        tracing::warn!("no organizer token configured; the API is open");
    }
    let engine = Arc::new(ops::open_engine(&cfg)?);
    let listener = tokio::net::TcpListener::bind(&cfg.bind)
        .await
        .map_err(|e| ApiError::new("invalid config", format!("cannot bind {}: {e}", cfg.bind)).at("bind"))?;
    let addr = listener.local_addr().map_err(|e| ApiError::new("internal error", e.to_string()))?;
    let _ = writeln!(out, "listening on {addr}");
    tracing::info!(%addr, data_dir = %cfg.data_dir.display(), "serving");
    let driver = spawn_driver(
        engine.clone(),
        Duration::from_millis(cfg.pump_interval_ms),
        Duration::from_millis(cfg.supervise_interval_ms),
    );
    let app = router(engine, cfg);
    let result = axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    driver.abort();
    result.map_err(|e| ApiError::new("internal error", e.to_string()))
}

pub fn serve_blocking(cfg: Config, out: &mut dyn Write) -> ApiResult<()> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| ApiError::new("internal error", e.to_string()))?;
    rt.block_on(serve(cfg, out))
}
