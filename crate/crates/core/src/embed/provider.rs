use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use super::EmbedError;
use crate::digest::stable_u64;

/// Maps texts to fixed-dimension vectors.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier baked into cache keys and model files.
    fn id(&self) -> String;

    fn dim(&self) -> usize;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

fn words(text: &str) -> Vec<String> {
    static WORD: OnceLock<Regex> = OnceLock::new();
    WORD.get_or_init(|| Regex::new(r"[a-z0-9]+").expect("static regex"))
        .find_iter(&text.to_lowercase())
        .map(|m| m.as_str().to_string())
        .collect()
}

/// Offline provider: signed feature hashing of word unigrams and bigrams,
/// normalized to unit length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashProjection {
    pub dim: usize,
    pub seed: u64,
}

impl HashProjection {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let tokens = words(text);
        let mut features: Vec<String> = tokens.clone();
        features.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
        if features.is_empty() {
            features.push(text.to_string());
        }
        let mut acc = vec![0f64; self.dim];
        for f in &features {
            let h = stable_u64(self.seed, &["feature", f]);
            let slot = (h % self.dim as u64) as usize;
            acc[slot] += if h >> 63 == 1 { 1.0 } else { -1.0 };
        }
        let mut norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // features cancelled out; fall back to a single hashed direction
            let h = stable_u64(self.seed, &["whole", text]);
            acc[(h % self.dim as u64) as usize] = 1.0;
            norm = 1.0;
        }
        acc.iter().map(|v| (v / norm) as f32).collect()
    }
}

impl EmbeddingProvider for HashProjection {
    fn id(&self) -> String {
        format!("hash-projection:d{}:s{}", self.dim, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteEmbeddingSettings {
    pub endpoint: String,
    pub model: String,
    pub dim: usize,
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

fn default_timeout() -> u64 {
    60
}

fn default_batch() -> usize {
    64
}

fn default_attempts() -> u32 {
    4
}

impl RemoteEmbeddingSettings {
    fn preset(endpoint: &str, model: &str, dim: usize) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            dim,
            auth_token_env: None,
            timeout_secs: default_timeout(),
            batch_size: default_batch(),
            max_attempts: default_attempts(),
        }
    }

    /// General-purpose sentence encoder, 384 dimensions.
    pub fn general(endpoint: &str) -> Self {
        Self::preset(endpoint, "sentence-transformers/all-MiniLM-L6-v2", 384)
    }

    /// Legal-domain encoder, 768 dimensions.
    pub fn legal(endpoint: &str) -> Self {
        Self::preset(endpoint, "nlpaueb/legal-bert-base-uncased", 768)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
    model: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// HTTP provider speaking `{texts, model}` → `{vectors}`.
pub struct RemoteEmbedding {
    settings: RemoteEmbeddingSettings,
    client: reqwest::blocking::Client,
    token: Option<String>,
}

impl RemoteEmbedding {
    pub fn new(settings: RemoteEmbeddingSettings) -> Result<Self, EmbedError> {
        let token = match &settings.auth_token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| EmbedError::Config(format!("environment variable {var} is not set")))?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| EmbedError::Config(e.to_string()))?;
        Ok(Self { settings, client, token })
    }

    fn post(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, (String, bool)> {
        let mut req = self.client.post(&self.settings.endpoint).json(&EmbedRequest {
            texts,
            model: &self.settings.model,
        });
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| (e.to_string(), true))?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.is_server_error() || status.as_u16() == 429;
            return Err((format!("http status {status}"), retryable));
        }
        let body: EmbedResponse = resp.json().map_err(|e| (e.to_string(), false))?;
        Ok(body.vectors)
    }
}

impl EmbeddingProvider for RemoteEmbedding {
    fn id(&self) -> String {
        format!("remote:{}:d{}", self.settings.model, self.settings.dim)
    }

    fn dim(&self) -> usize {
        self.settings.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.settings.batch_size.max(1)) {
            let mut attempt = 0;
            let vectors = loop {
                attempt += 1;
                match self.post(chunk) {
                    Ok(v) => break v,
                    Err((message, retryable)) => {
                        if !retryable || attempt >= self.settings.max_attempts {
                            return Err(EmbedError::Transport { attempts: attempt, message });
                        }
                        std::thread::sleep(Duration::from_millis(250 << attempt.min(6)));
                    }
                }
            };
            if vectors.len() != chunk.len() {
                return Err(EmbedError::Integrity(format!(
                    "asked for {} vectors, received {}",
                    chunk.len(),
                    vectors.len()
                )));
            }
            out.extend(vectors);
        }
        Ok(out)
    }
}
