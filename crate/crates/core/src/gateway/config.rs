use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    CompletionBackend, EmbeddingBackend, GatewayError, LiveChat, LiveEmbedding, OracleBackend,
    ReplayBackend, Result, RetryPolicy, RuleBook, TestEmbedding,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    LiveChat,
    Replay,
    Oracle,
    LiveEmbedding,
    TestEmbedding,
}

impl BackendKind {
    pub fn is_live(self) -> bool {
        matches!(self, BackendKind::LiveChat | BackendKind::LiveEmbedding)
    }

    pub fn is_embedding(self) -> bool {
        matches!(self, BackendKind::LiveEmbedding | BackendKind::TestEmbedding)
    }
}

fn default_retries() -> u32 {
    3
}
fn default_timeout() -> u64 {
    60_000
}
fn default_rps() -> f64 {
    5.0
}
fn default_backoff() -> u64 {
    500
}

/// One backend section of the workspace config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_rps")]
    pub rate_limit_rps: f64,
    /// Name of the environment variable holding the secret.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credentials_ref: Option<String>,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
}

impl BackendConfig {
    pub fn new(kind: BackendKind) -> Self {
        BackendConfig {
            kind,
            base_url: None,
            model_name: None,
            temperature: 0.0,
            max_retries: default_retries(),
            request_timeout_ms: default_timeout(),
            rate_limit_rps: default_rps(),
            credentials_ref: None,
            backoff_base_ms: default_backoff(),
            system_prompt: None,
            replay_dir: None,
            rules_path: None,
            dimension: None,
        }
    }

    pub fn oracle() -> Self {
        BackendConfig::new(BackendKind::Oracle)
    }

    pub fn test_embedding(dimension: usize) -> Self {
        BackendConfig {
            dimension: Some(dimension),
            ..BackendConfig::new(BackendKind::TestEmbedding)
        }
    }

    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        BackendConfig {
            replay_dir: Some(dir.into()),
            ..BackendConfig::new(BackendKind::Replay)
        }
    }

    pub fn live_chat(base_url: impl Into<String>, model: impl Into<String>, credentials_ref: impl Into<String>) -> Self {
        BackendConfig {
            base_url: Some(base_url.into()),
            model_name: Some(model.into()),
            credentials_ref: Some(credentials_ref.into()),
            ..BackendConfig::new(BackendKind::LiveChat)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GatewayError::Config(m.to_string()));
        if self.kind.is_live() {
            if self.base_url.as_deref().is_none_or(str::is_empty) {
                return bad("live backends require `base_url`");
            }
            if self.credentials_ref.as_deref().is_none_or(str::is_empty) {
                return bad("live backends require `credentials_ref`");
            }
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("`temperature` must be >= 0");
        }
        if self.rate_limit_rps.is_nan() || self.rate_limit_rps <= 0.0 {
            return bad("`rate_limit_rps` must be > 0");
        }
        if self.kind == BackendKind::Replay && self.replay_dir.is_none() {
            return bad("replay backend requires `replay_dir`");
        }
        if self.dimension == Some(0) {
            return bad("`dimension` must be positive");
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            backoff_base: Duration::from_millis(self.backoff_base_ms),
            backoff_cap: Duration::from_secs(30),
        }
    }

    fn resolve(base: &Path, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            base.join(path)
        }
    }

    /// Instantiates a completion backend. Relative paths resolve against
    /// `base_dir`; an oracle without `rules_path` uses `rules`.
    pub fn completion_backend(&self, base_dir: &Path, rules: Option<RuleBook>) -> Result<Box<dyn CompletionBackend>> {
        self.validate()?;
        match self.kind {
            BackendKind::LiveChat => Ok(Box::new(LiveChat::new(self)?)),
            BackendKind::Replay => {
                let dir = Self::resolve(base_dir, self.replay_dir.as_ref().expect("validated"));
                Ok(Box::new(ReplayBackend::open(dir)?))
            }
            BackendKind::Oracle => {
                let rules = match &self.rules_path {
                    Some(path) => RuleBook::load(&Self::resolve(base_dir, path))?,
                    None => rules.ok_or_else(|| GatewayError::Config("oracle backend has no keyword rules".into()))?,
                };
                Ok(Box::new(OracleBackend::new(rules)))
            }
            kind => Err(GatewayError::Config(format!("{kind:?} is not a completion backend"))),
        }
    }

    pub fn embedding_backend(&self) -> Result<Box<dyn EmbeddingBackend>> {
        self.validate()?;
        match self.kind {
            BackendKind::LiveEmbedding => Ok(Box::new(LiveEmbedding::new(self)?)),
            BackendKind::TestEmbedding => Ok(Box::new(TestEmbedding::new(self.dimension.unwrap_or(384)))),
            kind => Err(GatewayError::Config(format!("{kind:?} is not an embedding backend"))),
        }
    }
}
