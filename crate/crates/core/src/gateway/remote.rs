//! JSON chat-completion backend over HTTP(S).
//!
//! Request body: `{"model", "messages": [{"role", "content"}], "temperature",
//! "max_tokens"}`; the completion is read from `choices[0].message.content`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::LlmRequest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSettings {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    settings: RemoteSettings,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

/// A failed attempt; `retryable` is false for errors a retry cannot fix.
#[derive(Debug, Clone)]
pub struct CallFailure {
    pub message: String,
    pub retryable: bool,
}

impl RemoteBackend {
    pub fn new(settings: RemoteSettings) -> Result<Self, String> {
        let token = match &settings.auth_token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| format!("environment variable {var} is not set"))?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self { settings, token, client })
    }

    pub fn settings(&self) -> &RemoteSettings {
        &self.settings
    }

    pub fn call(&self, request: &LlmRequest) -> Result<String, CallFailure> {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.text}));
        let body = json!({
            "model": self.settings.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut builder = self.client.post(&self.settings.endpoint).json(&body);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().map_err(|e| CallFailure {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(CallFailure {
                message: format!("HTTP {status}"),
                retryable: status.is_server_error() || status.as_u16() == 429,
            });
        }
        let value: serde_json::Value = response.json().map_err(|e| CallFailure {
            message: format!("invalid response body: {e}"),
            retryable: true,
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| CallFailure {
                message: "response lacks choices[0].message.content".into(),
                retryable: false,
            })
    }
}
