//! Chat-completion client: live HTTP backend or deterministic mock, with
//! retries, rate limiting and a per-attempt audit log.

mod clock;
mod limiter;
mod mock;
mod transport;

use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use clock::{Clock, FakeClock, SystemClock};
pub use limiter::RateLimiter;
pub use transport::{HttpRequest, HttpResponse, Transport, TransportError, UreqTransport};

/// Sampling temperature for the two query-generation stages.
pub const STAGE_TEMPERATURE: f64 = 0.2;
/// Sampling temperature for rephrasings.
pub const REPHRASE_TEMPERATURE: f64 = 0.7;

const BACKOFF_BASE: Duration = Duration::from_secs(1);
const BACKOFF_JITTER: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("gave up after {attempts} attempts (last status {last_status:?})")]
    RetriesExhausted {
        attempts: u32,
        last_status: Option<u16>,
    },
    #[error("environment variable {0} with the API key is not set")]
    AuthMissing(String),
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("malformed backend response: {0}")]
    MalformedTransportResponse(String),
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("connection error: {0}")]
    Connection(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Free-form tag carried into the audit log.
    pub request_tag: String,
}

impl ChatRequest {
    pub fn user(
        model: impl Into<String>,
        prompt: impl Into<String>,
        temperature: f64,
        tag: impl Into<String>,
    ) -> Self {
        Self {
            model: model.into(),
            messages: vec![ChatMessage {
                role: Role::User,
                content: prompt.into(),
            }],
            temperature,
            max_tokens: 512,
            request_tag: tag.into(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if self.messages.iter().any(|m| m.content.is_empty()) {
            return Err(GatewayError::InvalidRequest("empty message content".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 || self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "bad sampling parameters".into(),
            ));
        }
        Ok(())
    }

    fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub backend: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model: String,
    pub base_url: String,
    pub api_key_env: String,
    pub requests_per_minute: u32,
    pub max_retries: u32,
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            model: "gpt-4o".into(),
            base_url: String::new(),
            api_key_env: "OPENAI_API_KEY".into(),
            requests_per_minute: 60,
            max_retries: 4,
            timeout_secs: 60,
        }
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.requests_per_minute == 0 {
            return Err(GatewayError::InvalidConfig(
                "requests_per_minute must be >= 1".into(),
            ));
        }
        if self.kind == BackendKind::Http
            && (self.base_url.is_empty() || self.api_key_env.is_empty())
        {
            return Err(GatewayError::InvalidConfig(
                "http backend needs base_url and api_key_env".into(),
            ));
        }
        Ok(())
    }
}

/// Anything that answers chat requests.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

/// One audit-log line; written per attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub request_tag: String,
    pub attempt: u32,
    /// HTTP status, or `"timeout"` / `"error"` / `"ok"` (mock).
    pub status: String,
    pub latency_ms: u64,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

pub struct LlmClient {
    cfg: BackendConfig,
    api_key: Option<String>,
    transport: Option<Arc<dyn Transport>>,
    clock: Arc<dyn Clock>,
    limiter: RateLimiter,
    audit: Option<Mutex<Box<dyn Write + Send>>>,
}

impl LlmClient {
    /// Client for `cfg`; the HTTP kind reads its key from the environment.
    pub fn new(cfg: BackendConfig) -> Result<Self, GatewayError> {
        let transport: Option<Arc<dyn Transport>> = match cfg.kind {
            BackendKind::Http => Some(Arc::new(UreqTransport::new(Duration::from_secs(
                cfg.timeout_secs,
            )))),
            BackendKind::Mock => None,
        };
        Self::build(cfg, transport, Arc::new(SystemClock::default()))
    }

    /// Client with an explicit transport and clock.
    pub fn with_transport(
        cfg: BackendConfig,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        Self::build(cfg, Some(transport), clock)
    }

    fn build(
        cfg: BackendConfig,
        transport: Option<Arc<dyn Transport>>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let api_key = match cfg.kind {
            BackendKind::Http => Some(
                std::env::var(&cfg.api_key_env)
                    .ok()
                    .filter(|k| !k.is_empty())
                    .ok_or_else(|| GatewayError::AuthMissing(cfg.api_key_env.clone()))?,
            ),
            BackendKind::Mock => None,
        };
        Ok(Self {
            limiter: RateLimiter::new(cfg.requests_per_minute),
            cfg,
            api_key,
            transport,
            clock,
            audit: None,
        })
    }

    pub fn with_audit(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.audit = Some(Mutex::new(sink));
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn backend_name(&self) -> &'static str {
        match self.cfg.kind {
            BackendKind::Http => "http",
            BackendKind::Mock => "mock",
        }
    }

    fn log(&self, tag: &str, attempt: u32, status: String, latency: Duration) {
        let Some(sink) = &self.audit else { return };
        let rec = AuditRecord {
            request_tag: tag.to_string(),
            attempt,
            status,
            latency_ms: latency.as_millis() as u64,
        };
        let mut sink = sink.lock().unwrap();
        let _ = writeln!(sink, "{}", serde_json::to_string(&rec).unwrap());
        let _ = sink.flush();
    }

    fn backoff(&self, retry: u32) -> Duration {
        let factor = 2f64.powi(retry as i32 - 1);
        let jitter = rand::thread_rng().gen_range(1.0 - BACKOFF_JITTER..=1.0 + BACKOFF_JITTER);
        BACKOFF_BASE.mul_f64(factor * jitter)
    }

    fn complete_mock(&self, req: &ChatRequest) -> ChatResponse {
        let start = self.clock.now();
        let content = mock::mock_reply(&req.prompt_text());
        let latency = self.clock.now().saturating_sub(start);
        self.log(&req.request_tag, 1, "ok".into(), latency);
        ChatResponse {
            content,
            latency_ms: latency.as_millis() as u64,
            attempt_count: 1,
            backend: "mock".into(),
        }
    }

    fn complete_http(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let transport = self
            .transport
            .as_ref()
            .ok_or_else(|| GatewayError::InvalidConfig("no transport".into()))?;
        let body = serde_json::to_string(&WireRequest {
            model: &req.model,
            messages: &req.messages,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        })
        .expect("request serializes");
        let http = HttpRequest {
            url: format!(
                "{}/chat/completions",
                self.cfg.base_url.trim_end_matches('/')
            ),
            bearer: self.api_key.clone(),
            body,
        };

        let max_attempts = self.cfg.max_retries + 1;
        let mut last_status = None;
        let mut last_was_timeout = false;
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                self.clock.sleep(self.backoff(attempt - 1));
            }
            let start = self.limiter.acquire(self.clock.as_ref());
            let result = transport.post_json(&http);
            let latency = self.clock.now().saturating_sub(start);
            match result {
                Ok(resp) if resp.status == 200 => {
                    self.log(&req.request_tag, attempt, "200".into(), latency);
                    let parsed: CompletionBody = serde_json::from_str(&resp.body)
                        .map_err(|e| GatewayError::MalformedTransportResponse(e.to_string()))?;
                    let content = parsed
                        .choices
                        .into_iter()
                        .next()
                        .map(|c| c.message.content)
                        .ok_or_else(|| {
                            GatewayError::MalformedTransportResponse("no choices".into())
                        })?;
                    return Ok(ChatResponse {
                        content,
                        latency_ms: latency.as_millis() as u64,
                        attempt_count: attempt,
                        backend: "http".into(),
                    });
                }
                Ok(resp) => {
                    self.log(&req.request_tag, attempt, resp.status.to_string(), latency);
                    if resp.status == 429 || resp.status >= 500 {
                        last_status = Some(resp.status);
                        last_was_timeout = false;
                    } else {
                        return Err(GatewayError::Status {
                            status: resp.status,
                            body: resp.body,
                        });
                    }
                }
                Err(TransportError::Timeout) => {
                    self.log(&req.request_tag, attempt, "timeout".into(), latency);
                    last_was_timeout = true;
                }
                Err(TransportError::Connection(m)) => {
                    self.log(&req.request_tag, attempt, "error".into(), latency);
                    return Err(GatewayError::Connection(m));
                }
            }
        }
        if last_was_timeout {
            Err(GatewayError::Timeout {
                attempts: max_attempts,
            })
        } else {
            Err(GatewayError::RetriesExhausted {
                attempts: max_attempts,
                last_status,
            })
        }
    }

    pub fn run_batch(&self, requests: &[ChatRequest], workers: usize) -> BatchOutput {
        run_batch(self, requests, workers)
    }
}

impl ChatBackend for LlmClient {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        match self.cfg.kind {
            BackendKind::Mock => Ok(self.complete_mock(req)),
            BackendKind::Http => self.complete_http(req),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub index: usize,
    pub request_tag: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct BatchOutput {
    /// Aligned with the input; `None` where the request failed.
    pub responses: Vec<Option<ChatResponse>>,
    pub failures: Vec<BatchFailure>,
}

/// Runs every request, never aborting on a single failure.
pub fn run_batch(
    backend: &dyn ChatBackend,
    requests: &[ChatRequest],
    workers: usize,
) -> BatchOutput {
    let run = || -> Vec<Result<ChatResponse, GatewayError>> {
        requests.par_iter().map(|r| backend.complete(r)).collect()
    };
    let results = match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => requests.iter().map(|r| backend.complete(r)).collect(),
    };
    let mut out = BatchOutput::default();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(resp) => out.responses.push(Some(resp)),
            Err(e) => {
                out.responses.push(None);
                out.failures.push(BatchFailure {
                    index,
                    request_tag: requests[index].request_tag.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    out
}
