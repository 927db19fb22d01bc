//! Chat-completion and embedding clients for OpenAI-compatible endpoints.
//!
//! Wire format (requests are JSON over POST):
//!
//! * `{base_url}/chat/completions` with `{"model", "temperature", "messages": [{"role", "content"}]}`;
//!   the reply text is read from `choices[0].message.content`.
//! * `{base_url}/embeddings` with `{"model", "input": [..]}`; vectors are read from
//!   `data[].embedding`, ordered by `data[].index`.
//!
//! The secret named by `credentials_ref` is sent as a bearer token.

use std::sync::Arc;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::{check_batch, check_prompt, BackendConfig, CompletionBackend, CompletionRecord, CompletionRequest, EmbeddingBackend, GatewayError, RateLimiter, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
}

impl RetryPolicy {
    pub fn delay_for(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.min(16));
        (self.backoff_base * factor).min(self.backoff_cap)
    }
}

enum Failure {
    Transient { status: Option<u16>, message: String, retry_after: Option<Duration> },
    Fatal(GatewayError),
}

fn classify_status(status: u16, body: String, retry_after: Option<Duration>) -> Failure {
    match status {
        401 | 403 => Failure::Fatal(GatewayError::Credential(format!("status {status}: {body}"))),
        408 | 409 | 429 | 500..=599 => Failure::Transient {
            status: Some(status),
            message: body,
            retry_after,
        },
        _ => Failure::Fatal(GatewayError::Rejected { status, body }),
    }
}

struct HttpTransport {
    client: Client,
    url_base: String,
    token: String,
    model: Option<String>,
    retry: RetryPolicy,
    limiter: Arc<RateLimiter>,
}

impl HttpTransport {
    fn from_config(config: &BackendConfig) -> Result<Self> {
        config.validate()?;
        let base_url = config.base_url.clone().expect("validated");
        let var = config.credentials_ref.clone().expect("validated");
        let token = std::env::var(&var)
            .map_err(|_| GatewayError::Credential(format!("environment variable `{var}` is not set")))?;
        let client = Client::builder()
            .timeout(Duration::from_millis(config.request_timeout_ms))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpTransport {
            client,
            url_base: base_url.trim_end_matches('/').to_string(),
            token,
            model: config.model_name.clone(),
            retry: config.retry_policy(),
            limiter: Arc::new(RateLimiter::new(config.rate_limit_rps)),
        })
    }

    /// POSTs `body` with retries; returns the decoded JSON and the attempt count.
    fn post(&self, path: &str, body: &Value) -> Result<(Value, u32)> {
        let url = format!("{}/{}", self.url_base, path);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            self.limiter.acquire();
            let outcome = self
                .client
                .post(&url)
                .bearer_auth(&self.token)
                .json(body)
                .send();
            let failure = match outcome {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .json::<Value>()
                        .map(|v| (v, attempt))
                        .map_err(|e| GatewayError::Malformed(e.to_string()));
                }
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let retry_after = resp
                        .headers()
                        .get(reqwest::header::RETRY_AFTER)
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<u64>().ok())
                        .map(Duration::from_secs);
                    let text = resp.text().unwrap_or_default();
                    classify_status(status, text, retry_after)
                }
                Err(err) => Failure::Transient {
                    status: err.status().map(|s| s.as_u16()),
                    message: err.to_string(),
                    retry_after: None,
                },
            };
            match failure {
                Failure::Fatal(err) => return Err(err),
                Failure::Transient { status, message, retry_after } => {
                    if attempt > self.retry.max_retries {
                        return Err(GatewayError::Unavailable {
                            attempts: attempt,
                            last_status: status,
                            message,
                        });
                    }
                    let delay = retry_after
                        .unwrap_or_else(|| self.retry.delay_for(attempt - 1))
                        .min(self.retry.backoff_cap);
                    log::debug!("transient failure from {url} ({status:?}), retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
            }
        }
    }
}

/// Live chat-completion backend.
pub struct LiveChat {
    transport: HttpTransport,
    temperature: f64,
    system_prompt: Option<String>,
}

impl LiveChat {
    pub fn new(config: &BackendConfig) -> Result<Self> {
        Ok(LiveChat {
            transport: HttpTransport::from_config(config)?,
            temperature: config.temperature,
            system_prompt: config.system_prompt.clone(),
        })
    }

    fn request_body(&self, prompt: &str) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &self.system_prompt {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": prompt}));
        let mut body = json!({"temperature": self.temperature, "messages": messages});
        if let Some(model) = &self.transport.model {
            body["model"] = json!(model);
        }
        body
    }
}

impl CompletionBackend for LiveChat {
    fn backend_id(&self) -> String {
        format!(
            "live_chat:{}",
            self.transport.model.as_deref().unwrap_or("default")
        )
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionRecord> {
        check_prompt(request)?;
        let started = Instant::now();
        let (reply, attempts) = self
            .transport
            .post("chat/completions", &self.request_body(&request.prompt))?;
        let text = reply["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| GatewayError::Malformed("missing choices[0].message.content".into()))?;
        Ok(CompletionRecord::new(
            &request.prompt,
            text.to_string(),
            started.elapsed(),
            attempts,
            &self.backend_id(),
        ))
    }
}

/// Live embedding backend.
pub struct LiveEmbedding {
    transport: HttpTransport,
    dimension: usize,
}

impl LiveEmbedding {
    pub fn new(config: &BackendConfig) -> Result<Self> {
        let dimension = config
            .dimension
            .ok_or_else(|| GatewayError::Config("live_embedding requires `dimension`".into()))?;
        Ok(LiveEmbedding {
            transport: HttpTransport::from_config(config)?,
            dimension,
        })
    }
}

impl EmbeddingBackend for LiveEmbedding {
    fn backend_id(&self) -> String {
        format!(
            "live_embedding:{}",
            self.transport.model.as_deref().unwrap_or("default")
        )
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        check_batch(texts)?;
        let mut body = json!({"input": texts});
        if let Some(model) = &self.transport.model {
            body["model"] = json!(model);
        }
        let (reply, _) = self.transport.post("embeddings", &body)?;
        let data = reply["data"]
            .as_array()
            .ok_or_else(|| GatewayError::Malformed("missing data array".into()))?;
        let mut indexed = Vec::with_capacity(data.len());
        for (pos, entry) in data.iter().enumerate() {
            let index = entry["index"].as_u64().map(|i| i as usize).unwrap_or(pos);
            let vector: Vec<f64> = entry["embedding"]
                .as_array()
                .ok_or_else(|| GatewayError::Malformed("missing embedding".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| GatewayError::Malformed("non-numeric embedding".into())))
                .collect::<Result<_>>()?;
            if vector.len() != self.dimension {
                return Err(GatewayError::DimensionMismatch {
                    expected: self.dimension,
                    got: vector.len(),
                });
            }
            indexed.push((index, vector));
        }
        if indexed.len() != texts.len() {
            return Err(GatewayError::Malformed(format!(
                "{} vectors for {} texts",
                indexed.len(),
                texts.len()
            )));
        }
        indexed.sort_by_key(|(i, _)| *i);
        Ok(indexed.into_iter().map(|(_, v)| v).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let policy = RetryPolicy {
            max_retries: 5,
            backoff_base: Duration::from_millis(100),
            backoff_cap: Duration::from_millis(500),
        };
        assert_eq!(policy.delay_for(0), Duration::from_millis(100));
        assert_eq!(policy.delay_for(1), Duration::from_millis(200));
        assert_eq!(policy.delay_for(2), Duration::from_millis(400));
        assert_eq!(policy.delay_for(3), Duration::from_millis(500));
        assert_eq!(policy.delay_for(40), Duration::from_millis(500));
    }

    #[test]
    fn status_classification() {
        assert!(matches!(classify_status(401, String::new(), None), Failure::Fatal(GatewayError::Credential(_))));
        assert!(matches!(classify_status(400, String::new(), None), Failure::Fatal(GatewayError::Rejected { .. })));
        assert!(matches!(classify_status(429, String::new(), None), Failure::Transient { .. }));
        assert!(matches!(classify_status(503, String::new(), None), Failure::Transient { .. }));
    }
}
