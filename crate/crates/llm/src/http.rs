use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use crate::{Backend, GenerationParams, GenerationRecord, LlmError, Result};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "SEGDST_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): exponential growth
    /// capped at `max_delay`, then scaled by a random factor in [0.5, 1].
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << attempt.saturating_sub(1).min(16));
        let capped = exp.min(self.max_delay);
        capped.mul_f64(rand::rng().random_range(0.5..=1.0))
    }
}

/// Chat-completion client: POSTs `{model, messages, temperature,
/// max_tokens}` and reads `choices[0].message.content`.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

impl HttpBackend {
    /// Reads the API key from the environment when present.
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            endpoint: endpoint.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            agent,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn attempt(&self, body: &Value) -> std::result::Result<(String, Option<String>), Attempt> {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => return Err(Attempt::Retry(format!("timeout ({t})"))),
            Err(e) => {
                return Err(Attempt::Fatal(LlmError::Unavailable {
                    attempts: 1,
                    message: e.to_string(),
                }))
            }
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(t)) => return Err(Attempt::Retry(format!("timeout reading body ({t})"))),
            Err(e) => return Err(Attempt::Fatal(LlmError::BadResponse(e.to_string()))),
        };
        if status == 429 || (500..600).contains(&status) {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(LlmError::Status { status, body: text }));
        }
        parse_completion(&text).map_err(Attempt::Fatal)
    }
}

fn parse_completion(text: &str) -> Result<(String, Option<String>)> {
    let v: Value = serde_json::from_str(text).map_err(|e| LlmError::BadResponse(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| LlmError::BadResponse("no choices[0]".into()))?;
    let content = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::BadResponse("no choices[0].message.content".into()))?;
    let finish = choice.get("finish_reason").and_then(Value::as_str).map(str::to_string);
    Ok((content.to_string(), finish))
}

impl Backend for HttpBackend {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<GenerationRecord> {
        let body = json!({
            "model": params.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        });
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            match self.attempt(&body) {
                Ok((output, finish_reason)) => {
                    let mut rec = GenerationRecord::new(params, prompt, output);
                    rec.finish_reason = finish_reason;
                    return Ok(rec);
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(why)) => {
                    last = why;
                    if attempt < self.retry.max_attempts {
                        std::thread::sleep(self.retry.delay(attempt));
                    }
                }
            }
        }
        Err(LlmError::Unavailable {
            attempts: self.retry.max_attempts,
            message: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delays_grow_and_cap() {
        let p = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(300),
        };
        for _ in 0..20 {
            let d1 = p.delay(1);
            assert!(d1 >= Duration::from_millis(50) && d1 <= Duration::from_millis(100));
            assert!(p.delay(4) <= Duration::from_millis(300));
        }
    }

    #[test]
    fn reads_choice_content() {
        let (out, finish) =
            parse_completion(r#"{"choices":[{"message":{"role":"assistant","content":"<T1>"},"finish_reason":"stop"}]}"#)
                .unwrap();
        assert_eq!(out, "<T1>");
        assert_eq!(finish.as_deref(), Some("stop"));
        assert!(parse_completion(r#"{"choices":[]}"#).is_err());
    }
}
