//! Reward service for external training loops: `/v1/score`, `/v1/group`,
//! and `/v1/allocate` over HTTP with JSON bodies, plus a line-oriented stdio
//! mode for harnesses that cannot open sockets.
//!
//! Handlers are thin wrappers over the library calls; responses are written
//! through the canonical JSON writer so a service reply is byte-identical to
//! the canonicalized library result. Requests are independent and share no
//! mutable state.

use alr_core::egra::{allocate, EgraConfig, ResolutionPlan};
use alr_core::grpo::score_group;
use alr_core::reward::{total_reward, GroundTruth};
use alr_core::wire::canonical_string;
use alr_core::{RewardBreakdown64, ScoringConfig64};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::sync::Arc;
use std::time::Duration;

pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8787";
pub const DEFAULT_MAX_BATCH_SIZE: usize = 4096;
pub const DEFAULT_REQUEST_TIMEOUT_SECS: u64 = 30;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind_addr: String,
    pub scoring: ScoringConfig64,
    pub max_batch_size: usize,
    pub request_timeout: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind_addr: DEFAULT_BIND_ADDR.to_string(),
            scoring: ScoringConfig64::default(),
            max_batch_size: DEFAULT_MAX_BATCH_SIZE,
            request_timeout: Duration::from_secs(DEFAULT_REQUEST_TIMEOUT_SECS),
        }
    }
}

#[derive(Debug)]
pub enum ServiceError {
    BadRequest(String),
    TooLarge(String),
    Internal(String),
}

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::TooLarge(_) => StatusCode::PAYLOAD_TOO_LARGE,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn message(&self) -> &str {
        match self {
            ServiceError::BadRequest(m) | ServiceError::TooLarge(m) | ServiceError::Internal(m) => m,
        }
    }
}

// ---- wire schemas -------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreItem {
    pub response: String,
    pub answers: Vec<String>,
    #[serde(default)]
    pub evidence_pages: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub items: Vec<ScoreItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub results: Vec<RewardBreakdown64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupItem {
    pub responses: Vec<String>,
    pub answers: Vec<String>,
    #[serde(default)]
    pub evidence_pages: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupRequest {
    pub groups: Vec<GroupItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupResult {
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub kept: bool,
    pub breakdowns: Vec<RewardBreakdown64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupResponse {
    pub groups: Vec<GroupResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocateRequest {
    pub num_pages: u32,
    #[serde(default)]
    pub evidence_pages: Vec<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hi_budget: Option<u32>,
    #[serde(default)]
    pub lo_budget: Option<u32>,
    #[serde(default)]
    pub downsample_fraction: Option<f64>,
    #[serde(default)]
    pub page_id_overhead: Option<u32>,
    #[serde(default)]
    pub question_tokens: Option<u32>,
}

// ---- handlers (shared by HTTP and stdio) --------------------------------

fn item_ground_truth(answers: &[String], pages: &[u32]) -> Result<GroundTruth, ServiceError> {
    GroundTruth::new(answers.to_vec(), pages.iter().copied())
        .map_err(|e| ServiceError::BadRequest(e.to_string()))
}

pub fn handle_score(cfg: &ServiceConfig, req: &ScoreRequest) -> Result<ScoreResponse, ServiceError> {
    if req.items.len() > cfg.max_batch_size {
        return Err(ServiceError::TooLarge(format!(
            "{} items exceed the batch limit of {}",
            req.items.len(),
            cfg.max_batch_size
        )));
    }
    let s = &cfg.scoring;
    let results = req
        .items
        .iter()
        .map(|item| {
            let gt = item_ground_truth(&item.answers, &item.evidence_pages)?;
            Ok(total_reward(&item.response, &gt, &s.weights, s.beta, s.tau))
        })
        .collect::<Result<Vec<_>, ServiceError>>()?;
    Ok(ScoreResponse { results })
}

pub fn handle_group(cfg: &ServiceConfig, req: &GroupRequest) -> Result<GroupResponse, ServiceError> {
    let rollouts: usize = req.groups.iter().map(|g| g.responses.len()).sum();
    if rollouts > cfg.max_batch_size {
        return Err(ServiceError::TooLarge(format!(
            "{rollouts} rollouts exceed the batch limit of {}",
            cfg.max_batch_size
        )));
    }
    let groups = req
        .groups
        .iter()
        .enumerate()
        .map(|(idx, g)| {
            let gt = item_ground_truth(&g.answers, &g.evidence_pages)?;
            let scored = score_group(idx.to_string(), &g.responses, &gt, &cfg.scoring)
                .map_err(|e| ServiceError::BadRequest(format!("group {idx}: {e}")))?;
            Ok(GroupResult {
                rewards: scored.rewards,
                advantages: scored.advantages,
                kept: scored.kept,
                breakdowns: scored.breakdowns,
            })
        })
        .collect::<Result<Vec<_>, ServiceError>>()?;
    Ok(GroupResponse { groups })
}

pub fn handle_allocate(
    _cfg: &ServiceConfig,
    req: &AllocateRequest,
) -> Result<ResolutionPlan, ServiceError> {
    let defaults = EgraConfig::default();
    let egra = EgraConfig {
        hi_budget: req.hi_budget.unwrap_or(defaults.hi_budget),
        lo_budget: req.lo_budget.unwrap_or(defaults.lo_budget),
        downsample_fraction: req.downsample_fraction.unwrap_or(defaults.downsample_fraction),
        page_id_overhead: req.page_id_overhead.unwrap_or(defaults.page_id_overhead),
        question_tokens: req.question_tokens.unwrap_or(defaults.question_tokens),
    };
    let evidence = req.evidence_pages.iter().copied().collect();
    allocate(req.num_pages, &evidence, &egra, req.seed)
        .map_err(|e| ServiceError::BadRequest(e.to_string()))
}

// ---- HTTP ----------------------------------------------------------------

pub fn router(cfg: ServiceConfig) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/score", post(score_endpoint))
        .route("/v1/group", post(group_endpoint))
        .route("/v1/allocate", post(allocate_endpoint))
        .with_state(Arc::new(cfg))
}

/// Binds the configured address and serves until the process ends. The
/// bound address is announced on stdout so callers can discover an
/// ephemeral port.
pub async fn serve(cfg: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&cfg.bind_addr).await?;
    let addr = listener.local_addr()?;
    println!("listening on http://{addr}");
    std::io::stdout().flush()?;
    axum::serve(listener, router(cfg)).await
}

async fn healthz() -> Response {
    let body = serde_json::json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
    });
    json_response(StatusCode::OK, body.to_string())
}

async fn score_endpoint(State(cfg): State<Arc<ServiceConfig>>, body: String) -> Response {
    run_handler(cfg, body, handle_score).await
}

async fn group_endpoint(State(cfg): State<Arc<ServiceConfig>>, body: String) -> Response {
    run_handler(cfg, body, handle_group).await
}

async fn allocate_endpoint(State(cfg): State<Arc<ServiceConfig>>, body: String) -> Response {
    run_handler(cfg, body, handle_allocate).await
}

/// Parse -> compute on a blocking thread under the request timeout ->
/// canonical JSON out. Panics surface as 500, never as silently wrong
/// numbers.
async fn run_handler<Req, Resp>(
    cfg: Arc<ServiceConfig>,
    body: String,
    handler: fn(&ServiceConfig, &Req) -> Result<Resp, ServiceError>,
) -> Response
where
    Req: DeserializeOwned + Send + 'static,
    Resp: Serialize + Send + 'static,
{
    let request: Req = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return error_response(&ServiceError::BadRequest(format!("malformed body: {e}"))),
    };
    let timeout = cfg.request_timeout;
    let work = tokio::task::spawn_blocking(move || {
        handler(&cfg, &request).and_then(|resp| {
            canonical_string(&resp).map_err(|e| ServiceError::Internal(e.to_string()))
        })
    });
    match tokio::time::timeout(timeout, work).await {
        Err(_) => json_response(
            StatusCode::SERVICE_UNAVAILABLE,
            serde_json::json!({"error": "request timed out"}).to_string(),
        ),
        Ok(Err(join_err)) => error_response(&ServiceError::Internal(join_err.to_string())),
        Ok(Ok(Err(service_err))) => error_response(&service_err),
        Ok(Ok(Ok(json))) => json_response(StatusCode::OK, json),
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(err: &ServiceError) -> Response {
    let body = serde_json::json!({"error": err.message()}).to_string();
    json_response(err.status(), body)
}

// ---- stdio ----------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum StdioRequest {
    Score(ScoreRequest),
    Group(GroupRequest),
    Allocate(AllocateRequest),
    Health {},
}

/// One JSON request per input line, one JSON reply per output line. Errors
/// are reported in-band as `{"error": ...}`; the loop never aborts on a bad
/// line. Returns at end of input.
pub fn serve_stdio(
    cfg: &ServiceConfig,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> std::io::Result<()> {
    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Ok(());
        }
        if line.trim().is_empty() {
            continue;
        }
        let reply = stdio_reply(cfg, &line);
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
}

fn stdio_reply(cfg: &ServiceConfig, line: &str) -> String {
    let error = |e: &ServiceError| serde_json::json!({"error": e.message()}).to_string();
    let request: StdioRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return error(&ServiceError::BadRequest(format!("malformed request: {e}"))),
    };
    let result = match &request {
        StdioRequest::Score(req) => handle_score(cfg, req).and_then(|r| canonical(&r)),
        StdioRequest::Group(req) => handle_group(cfg, req).and_then(|r| canonical(&r)),
        StdioRequest::Allocate(req) => handle_allocate(cfg, req).and_then(|r| canonical(&r)),
        StdioRequest::Health {} => Ok(serde_json::json!({
            "status": "ok",
            "version": env!("CARGO_PKG_VERSION"),
        })
        .to_string()),
    };
    result.unwrap_or_else(|e| error(&e))
}

fn canonical<T: Serialize>(value: &T) -> Result<String, ServiceError> {
    canonical_string(value).map_err(|e| ServiceError::Internal(e.to_string()))
}
