//! Uniform access to text-completion and embedding providers.
//!
//! Every backend answers [`CompletionRequest`]s with a [`CompletionRecord`]
//! carrying the digest of the exact prompt bytes, so grade cells can be
//! traced back to the prompt that produced them. Live HTTP backends share a
//! rate limiter and retry transient failures; the replay and oracle backends
//! are fully deterministic and are what the test suites run against.

mod config;
mod embedding;
mod http;
mod oracle;
mod rate_limit;
mod replay;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{BackendConfig, BackendKind};
pub use embedding::{l2_normalize, TestEmbedding};
pub use http::{LiveChat, LiveEmbedding, RetryPolicy};
pub use oracle::{oracle_grade, KeywordRules, OracleBackend, RuleBook};
pub use rate_limit::RateLimiter;
pub use replay::{Recorder, ReplayBackend, ReplayStore};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable after {attempts} attempt(s){}: {message}", status_suffix(*.last_status))]
    Unavailable {
        attempts: u32,
        last_status: Option<u16>,
        message: String,
    },
    #[error("credential rejected: {0}")]
    Credential(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("no recording for prompt hash {0}")]
    MissingRecording(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn status_suffix(status: Option<u16>) -> String {
    status.map(|s| format!(" (last status {s})")).unwrap_or_default()
}

impl GatewayError {
    /// Whether a caller may reasonably try the same request again later.
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Unavailable { .. })
    }
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;

/// Hex SHA-256 of the exact prompt bytes.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Structured side information about the cell being graded. Only rule-based
/// backends look at it; model backends see the prompt text alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellContext {
    pub item_id: String,
    pub student_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub context: Option<CellContext>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            context: None,
        }
    }

    pub fn with_context(mut self, item_id: impl Into<String>, student_text: impl Into<String>) -> Self {
        self.context = Some(CellContext {
            item_id: item_id.into(),
            student_text: student_text.into(),
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub prompt_hash: String,
    pub raw_text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub backend_id: String,
}

impl CompletionRecord {
    pub(crate) fn new(prompt: &str, raw_text: String, latency: Duration, attempts: u32, backend_id: &str) -> Self {
        CompletionRecord {
            prompt_hash: prompt_hash(prompt),
            raw_text,
            latency_ms: latency.as_millis() as u64,
            attempt_count: attempts,
            backend_id: backend_id.to_string(),
        }
    }
}

pub trait CompletionBackend: Send + Sync {
    fn backend_id(&self) -> String;
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionRecord>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionRecord> {
        (**self).complete(request)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionRecord> {
        (**self).complete(request)
    }
}

pub trait EmbeddingBackend: Send + Sync {
    fn backend_id(&self) -> String;
    /// Advertised vector dimension.
    fn dimension(&self) -> usize;
    /// One vector per input text, in input order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

impl<B: EmbeddingBackend + ?Sized> EmbeddingBackend for Box<B> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        (**self).embed(texts)
    }
}

pub(crate) fn check_prompt(request: &CompletionRequest) -> Result<()> {
    if request.prompt.trim().is_empty() {
        return Err(GatewayError::InvalidRequest("prompt is empty".into()));
    }
    Ok(())
}

pub(crate) fn check_batch(texts: &[&str]) -> Result<()> {
    if texts.is_empty() {
        return Err(GatewayError::InvalidRequest("embedding batch is empty".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(GatewayError::InvalidRequest(format!("text {i} in batch is empty")));
    }
    Ok(())
}
