//! HTTP completion client with retries.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{ClientError, LabelingClient};

pub const DEFAULT_API_KEY_ENV: &str = "ERRSLICE_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Completion endpoint, e.g. `https://api.example.com/v1/completions`.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_parallelism: usize,
    /// Completion length requested from the service.
    pub max_completion_tokens: usize,
    /// Sampling temperature, sent only when set.
    pub temperature: Option<f64>,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            model: String::new(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: 60,
            max_parallelism: 4,
            max_completion_tokens: 16,
            temperature: None,
            retries: 3,
            backoff_ms: 500,
        }
    }
}

impl RemoteConfig {
    /// Reads `ERRSLICE_LLM_ENDPOINT` and `ERRSLICE_LLM_MODEL`.
    pub fn from_env() -> Result<Self, ClientError> {
        let endpoint = std::env::var("ERRSLICE_LLM_ENDPOINT")
            .map_err(|_| ClientError::Config("ERRSLICE_LLM_ENDPOINT is not set".into()))?;
        let model = std::env::var("ERRSLICE_LLM_MODEL").unwrap_or_else(|_| "text-davinci-002".into());
        Ok(RemoteConfig {
            endpoint,
            model,
            ..RemoteConfig::default()
        })
    }
}

/// Posts `{model, prompt, max_tokens[, temperature]}` and reads the first
/// choice (`text`, or `message.content` for chat-style responses).
/// Transport failures, 429 and 5xx are retried with exponential backoff.
pub struct RemoteClient {
    config: RemoteConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteClient {
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteClient {
            config,
            api_key,
            agent,
        }
    }

    fn attempt(&self, body: &Value) -> Result<String, ClientError> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ClientError::Status { code: status, body: text });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| ClientError::Decode(e.to_string()))?;
        let choice = &value["choices"][0];
        choice["text"]
            .as_str()
            .or_else(|| choice["message"]["content"].as_str())
            .map(str::to_string)
            .ok_or_else(|| ClientError::Decode("response has no choices[0].text".into()))
    }
}

fn retryable(err: &ClientError) -> bool {
    match err {
        ClientError::Transport(_) => true,
        ClientError::Status { code, .. } => *code == 429 || *code >= 500,
        _ => false,
    }
}

impl LabelingClient for RemoteClient {
    fn name(&self) -> &str {
        "remote"
    }

    fn max_parallelism(&self) -> usize {
        self.config.max_parallelism.max(1)
    }

    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        if self.config.endpoint.is_empty() {
            return Err(ClientError::Config("no endpoint configured".into()));
        }
        let mut body = json!({
            "model": self.config.model,
            "prompt": prompt,
            "max_tokens": self.config.max_completion_tokens,
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if retryable(&e) && attempt < self.config.retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt);
                    warn!(attempt, wait_ms = wait, error = %e, "completion failed, retrying");
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                Err(e) => {
                    debug!(error = %e, "completion failed");
                    return Err(e);
                }
            }
        }
    }
}
