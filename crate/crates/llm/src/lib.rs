//! Completion backends. Each call sends one prompt and returns one
//! [`GenerationRecord`]; backends are safe to call from many threads.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

mod cache;
mod http;
mod mock;

pub use cache::{cache_stats, CacheDir, CacheStats, ReplayBackend};
pub use http::{HttpBackend, RetryPolicy, API_KEY_ENV};
pub use mock::{ConcurrencyProbe, MockBackend};

pub type Result<T, E = LlmError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("endpoint answered HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    BadResponse(String),
    #[error("no cached generation for key {key} (strict replay)")]
    MissingKey { key: String },
    #[error("cache record {path} is corrupt: {message}")]
    Corrupt { path: String, message: String },
    #[error("cache I/O on {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("mock backend has no output for this prompt: {0}")]
    Unscripted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            model: "gpt-4".to_string(),
            temperature: 0.0,
            max_output_tokens: 1500,
        }
    }
}

impl GenerationParams {
    /// Hex SHA-256 over the canonical JSON of the parameters and prompt.
    /// Field order is fixed by the struct, so equal inputs give equal keys.
    pub fn cache_key(&self, prompt: &str) -> String {
        #[derive(Serialize)]
        struct KeyMaterial<'a> {
            model: &'a str,
            temperature: f64,
            max_output_tokens: u32,
            prompt: &'a str,
        }
        let material = KeyMaterial {
            model: &self.model,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            prompt,
        };
        let bytes = serde_json::to_vec(&material).expect("key material serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// One prompt with its completion, as stored in the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub key: String,
    pub params: GenerationParams,
    pub prompt: String,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
}

impl GenerationRecord {
    pub fn new(params: &GenerationParams, prompt: &str, output: impl Into<String>) -> Self {
        GenerationRecord {
            key: params.cache_key(prompt),
            params: params.clone(),
            prompt: prompt.to_string(),
            output: output.into(),
            finish_reason: None,
        }
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<GenerationRecord>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<GenerationRecord> {
        (**self).complete(prompt, params)
    }
}
